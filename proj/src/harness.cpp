#include "harness.hpp"

#include "checkpoint.hpp"
#include "rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <tuple>

namespace fs = std::filesystem;

namespace gradfix {

namespace {

template <typename F>
auto stage(const std::string & name, F && f) {
    try {
        return f();
    } catch (const Error & e) {
        throw Error(e.code(), "stage '" + name + "' failed: " + e.what());
    }
}

struct AlphaChoice {
    double alpha = 0.0;
    double val_accuracy = 0.0;
    TaskVector delta;        // at the selected alpha
    ParamVector transported;
};

// Validation-accuracy argmax over the grid; ascending scan with strict
// improvement keeps the smaller alpha on ties.
AlphaChoice select_alpha(const ParamVector & theta_b, const MaskVector & mask, const TaskVector & tau_a,
                         Reference reference, const ExperimentConfig & cfg, const LabeledDataset & val) {
    AlphaChoice best;
    best.val_accuracy = -1.0;
    for (double alpha : cfg.alpha_grid) {
        TaskVector delta = build_delta(mask, tau_a, alpha);
        ParamVector candidate = transport(theta_b, delta, reference);
        const double acc = evaluate(candidate, val, cfg.model);
        if (acc > best.val_accuracy) {
            best.alpha = alpha;
            best.val_accuracy = acc;
            best.delta = std::move(delta);
            best.transported = std::move(candidate);
        }
    }
    return best;
}

SelectionResult select_subset(Heuristic heuristic, int b, const LabeledDataset & train,
                              const FeatureSet & features, uint64_t seed) {
    switch (heuristic) {
        case Heuristic::Random:   return select_random(train, b, seed);
        case Heuristic::Herding:  return select_herding(features, b);
        case Heuristic::KMedoids: return select_kmedoids(features, b);
        case Heuristic::Coreset:  return select_coreset(features, b);
    }
    throw_config("unknown heuristic");
}

uint64_t subset_seed(uint64_t replicate, int b) {
    return derive_seed(replicate, "subset", static_cast<uint64_t>(b));
}

bool row_key_less(const ReportRow & a, const ReportRow & b) {
    return std::tie(a.variant, a.strategy, a.aggregation, a.heuristic, a.b, a.seed) <
           std::tie(b.variant, b.strategy, b.aggregation, b.heuristic, b.b, b.seed);
}

// Rows that involve no supervision subset; identical for every replicate
// seed, computed once and stamped per seed.
std::vector<ReportRow> base_rows(const ExperimentConfig & cfg, const BaseArtifacts & art) {
    const ModelSpec & spec = cfg.model;
    const LabeledDataset & test = art.world.test;

    std::vector<ReportRow> rows;
    auto eval_row = [&](const std::string & variant, const ParamVector & theta) {
        ReportRow row;
        row.variant = variant;
        row.strategy = "-";
        row.aggregation = "-";
        row.heuristic = "-";
        row.accuracy = evaluate(theta, test, spec);
        row.loss_value = loss(theta, test, spec);
        return row;
    };

    rows.push_back(eval_row("zero_shot", art.theta_b));
    rows.push_back(eval_row("fine_tune", art.theta_b_ft));
    rows.push_back(eval_row("naive_add", add_scaled(art.theta_b, art.tau_a, 1.0)));

    const bool wants_agreement =
        std::count(cfg.strategies.begin(), cfg.strategies.end(), MaskStrategy::Agreement) > 0;
    const bool wants_force =
        std::count(cfg.strategies.begin(), cfg.strategies.end(), MaskStrategy::ForceAgreement) > 0;

    // oracle rows: reference signs from tau_B, additive application
    for (MaskStrategy strategy : {MaskStrategy::Agreement, MaskStrategy::ForceAgreement}) {
        if ((strategy == MaskStrategy::Agreement && !wants_agreement) ||
            (strategy == MaskStrategy::ForceAgreement && !wants_force)) {
            continue;
        }
        const MaskVector mask = build_mask(strategy, art.sign_tau_a, art.oracle_ref, 0);
        const AlphaChoice choice =
            select_alpha(art.theta_b, mask, art.tau_a, Reference::OracleTauB, cfg, art.world.val);
        ReportRow row;
        row.variant = "oracle";
        row.strategy = to_string(strategy);
        row.aggregation = "-";
        row.heuristic = "-";
        row.alpha = choice.alpha;
        row.accuracy = evaluate(choice.transported, test, spec);
        row.loss_value = loss(choice.transported, test, spec);
        row.descent_inner_product = descent_check(art.full_gradient, choice.delta);
        rows.push_back(std::move(row));
    }
    return rows;
}

// Subset-dependent rows for one replicate seed.
std::vector<ReportRow> rows_for_seed(const ExperimentConfig & cfg, uint64_t seed,
                                     const BaseArtifacts & art) {
    const ModelSpec & spec = cfg.model;
    const LabeledDataset & train = art.world.train;
    const LabeledDataset & val = art.world.val;
    const LabeledDataset & test = art.world.test;

    std::vector<ReportRow> rows;
    auto push = [&](ReportRow row) {
        row.seed = seed;
        rows.push_back(std::move(row));
    };

    const bool wants_agreement =
        std::count(cfg.strategies.begin(), cfg.strategies.end(), MaskStrategy::Agreement) > 0;
    const bool wants_force =
        std::count(cfg.strategies.begin(), cfg.strategies.end(), MaskStrategy::ForceAgreement) > 0;
    const bool wants_random =
        std::count(cfg.strategies.begin(), cfg.strategies.end(), MaskStrategy::Random) > 0;

    // random-mask ablation: no supervision involved, subtractive application
    if (wants_random) {
        const MaskVector mask = mask_random(art.sign_tau_a, derive_seed(seed, "random_mask"));
        const AlphaChoice choice =
            select_alpha(art.theta_b, mask, art.tau_a, Reference::GradientSigns, cfg, val);
        ReportRow row;
        row.variant = "gradfix";
        row.strategy = "random";
        row.aggregation = "-";
        row.heuristic = "-";
        row.alpha = choice.alpha;
        row.accuracy = evaluate(choice.transported, test, spec);
        row.loss_value = loss(choice.transported, test, spec);
        row.descent_inner_product = descent_check(art.full_gradient, choice.delta);
        push(std::move(row));
    }

    for (int b : cfg.budgets) {
        for (Heuristic heuristic : cfg.heuristics) {
            const SelectionResult selection = stage(
                "select(b=" + std::to_string(b) + ", heuristic=" + to_string(heuristic) + ")",
                [&] { return select_subset(heuristic, b, train, art.features, subset_seed(seed, b)); });
            const LabeledDataset subset = gather(train, selection.all_indices(), "subset");
            const ParamVector g_subset = grad(art.theta_b, subset, spec);

            if (heuristic == Heuristic::Random) {
                TrainConfig recipe = cfg.fewshot;
                recipe.seed = derive_seed(seed, "fewshot", static_cast<uint64_t>(b));
                const ParamVector theta_opt = stage("fewshot(b=" + std::to_string(b) + ")", [&] {
                    return fewshot_baseline(art.theta_b, subset, recipe, spec);
                });
                ReportRow row;
                row.variant = "fewshot";
                row.strategy = "-";
                row.aggregation = "-";
                row.heuristic = "random";
                row.b = b;
                row.accuracy = evaluate(theta_opt, test, spec);
                row.loss_value = loss(theta_opt, test, spec);
                push(std::move(row));
            }

            for (Aggregation aggregation : cfg.aggregations) {
                const SignEstimate estimate =
                    stage("signs(b=" + std::to_string(b) + ")", [&] {
                        return aggregation == Aggregation::Majority
                                   ? majority_vote_signs(art.theta_b, subset, spec, cfg.zero_tol)
                                   : mean_signs(art.theta_b, subset, spec, cfg.zero_tol);
                    });
                const auto agreement =
                    agreement_stats(estimate.signs, art.full_gradient_signs, Grouping::PerSegment);

                for (MaskStrategy strategy : {MaskStrategy::Agreement, MaskStrategy::ForceAgreement}) {
                    if ((strategy == MaskStrategy::Agreement && !wants_agreement) ||
                        (strategy == MaskStrategy::ForceAgreement && !wants_force)) {
                        continue;
                    }
                    const MaskVector mask = build_mask(strategy, art.sign_tau_a, estimate.signs, 0);
                    const AlphaChoice choice =
                        select_alpha(art.theta_b, mask, art.tau_a, Reference::GradientSigns, cfg, val);
                    ReportRow row;
                    row.variant = "gradfix";
                    row.strategy = to_string(strategy);
                    row.aggregation = to_string(aggregation);
                    row.heuristic = to_string(heuristic);
                    row.b = b;
                    row.alpha = choice.alpha;
                    row.accuracy = evaluate(choice.transported, test, spec);
                    row.loss_value = loss(choice.transported, test, spec);
                    row.descent_inner_product = descent_check(g_subset, choice.delta);
                    row.agreement_with_oracle = agreement;
                    push(std::move(row));
                }
            }
        }
    }

    return rows;
}

std::string pack_agreement(const std::vector<AgreementRow> & rows) {
    std::string out;
    for (size_t i = 0; i < rows.size(); i++) {
        if (i > 0) {
            out += ";";
        }
        out += rows[i].group + "=" + format_double(rows[i].agree_fraction) + "/" +
               std::to_string(rows[i].n_nonzero_pairs);
    }
    return out.empty() ? "-" : out;
}

void write_text_atomic(const std::string & path, const std::string & content) {
    const std::string tmp = path + ".tmp";
    FILE * f = fopen(tmp.c_str(), "wb");
    if (!f) {
        throw_io("cannot open for writing: " + tmp);
    }
    const size_t written = fwrite(content.data(), 1, content.size(), f);
    fclose(f);
    if (written != content.size()) {
        remove(tmp.c_str());
        throw_io("short write: " + tmp);
    }
    if (rename(tmp.c_str(), path.c_str()) != 0) {
        remove(tmp.c_str());
        throw_io("cannot rename " + tmp + " to " + path);
    }
}

ExperimentReport assemble_report(const ExperimentConfig & cfg, const BaseArtifacts & art) {
    ExperimentReport report;
    report.config_hash = config_hash(cfg);

    const std::vector<ReportRow> shared = base_rows(cfg, art);
    for (uint64_t seed : cfg.seeds) {
        for (ReportRow row : shared) {
            row.seed = seed;
            report.rows.push_back(std::move(row));
        }
        auto rows = rows_for_seed(cfg, seed, art);
        report.rows.insert(report.rows.end(), std::make_move_iterator(rows.begin()),
                           std::make_move_iterator(rows.end()));
    }
    std::sort(report.rows.begin(), report.rows.end(), row_key_less);
    return report;
}

} // namespace

BaseArtifacts prepare_base(const ExperimentConfig & cfg) {
    BaseArtifacts art;

    const uint64_t base_seed = cfg.world.seed;
    art.world = stage("world", [&] { return make_world(cfg.world); });

    const ModelSpec & spec = cfg.model;

    TrainConfig pre_a = cfg.pretrain;
    pre_a.seed = derive_seed(base_seed, "pretrain_a");
    art.theta_a = stage("pretrain_a", [&] {
        return train(init_params(spec, derive_seed(base_seed, "init_a")), art.world.pretrain_a, pre_a,
                     spec);
    });

    TrainConfig pre_b = cfg.pretrain;
    pre_b.seed = derive_seed(base_seed, "pretrain_b");
    art.theta_b = stage("pretrain_b", [&] {
        return train(init_params(spec, derive_seed(base_seed, "init_b")), art.world.pretrain_b, pre_b,
                     spec);
    });

    TrainConfig ft_a = cfg.finetune;
    ft_a.seed = derive_seed(base_seed, "finetune_a");
    art.theta_a_ft = stage("finetune_a", [&] { return train(art.theta_a, art.world.train, ft_a, spec); });
    art.tau_a = diff(art.theta_a_ft, art.theta_a);

    TrainConfig ft_b = cfg.finetune;
    ft_b.seed = derive_seed(base_seed, "finetune_b");
    art.theta_b_ft = stage("finetune_b", [&] { return train(art.theta_b, art.world.train, ft_b, spec); });
    art.tau_b = diff(art.theta_b_ft, art.theta_b);

    art.sign_tau_a = sign_of(art.tau_a, cfg.zero_tol);
    art.oracle_ref = oracle_signs(art.tau_b, cfg.zero_tol);
    art.full_gradient = grad(art.theta_b, art.world.train, spec);
    art.full_gradient_signs = sign_of(art.full_gradient, cfg.zero_tol);

    const bool needs_features =
        std::count_if(cfg.heuristics.begin(), cfg.heuristics.end(),
                      [](Heuristic h) { return h != Heuristic::Random; }) > 0;
    if (needs_features) {
        // structured selectors embed with the frozen source encoder
        art.features = stage("embed", [&] { return embed(art.theta_a, art.world.train, spec); });
    }

    return art;
}

ExperimentReport run_pipeline(const ExperimentConfig & cfg) {
    const BaseArtifacts art = prepare_base(cfg);
    return assemble_report(cfg, art);
}

ExperimentReport run_pipeline_files(const ExperimentConfig & cfg, const std::string & out_dir) {
    const fs::path out(out_dir);
    const fs::path partial = out / "partial";
    std::error_code ec;
    fs::create_directories(partial, ec);
    if (ec) {
        throw_io("cannot create directory: " + partial.string());
    }

    const BaseArtifacts art = prepare_base(cfg);

    const fs::path models = partial / "models";
    fs::create_directories(models, ec);
    if (ec) {
        throw_io("cannot create directory: " + models.string());
    }
    save_checkpoint(art.theta_a, (models / "theta_a.gfx").string());
    save_checkpoint(art.theta_b, (models / "theta_b.gfx").string());
    save_checkpoint(art.theta_a_ft, (models / "theta_a_ft.gfx").string());
    save_checkpoint(art.theta_b_ft, (models / "theta_b_ft.gfx").string());
    save_checkpoint(art.tau_a, (models / "tau_a.gfx").string());
    save_checkpoint(art.tau_b, (models / "tau_b.gfx").string());
    save_signs(art.oracle_ref, (models / "oracle_signs.gfxs").string());

    const ExperimentReport report = assemble_report(cfg, art);
    report_emit(report, partial.string());

    // promote everything out of partial/; stale copies are replaced
    for (const auto & entry : fs::directory_iterator(partial)) {
        const fs::path target = out / entry.path().filename();
        fs::remove_all(target, ec);
        fs::rename(entry.path(), target, ec);
        if (ec) {
            throw_io("cannot move " + entry.path().string() + " to " + target.string());
        }
    }
    fs::remove_all(partial, ec);
    return report;
}

AlphaSweepResult sweep_alpha(const ExperimentConfig & cfg, const std::string & variant) {
    if (variant != "oracle" && variant != "gradfix") {
        throw_config("sweep_alpha: variant must be 'oracle' or 'gradfix'");
    }
    const BaseArtifacts art = prepare_base(cfg);

    AlphaSweepResult out;
    out.alphas = cfg.alpha_grid;
    out.val_accuracy.assign(cfg.alpha_grid.size(), 0.0);
    out.test_accuracy.assign(cfg.alpha_grid.size(), 0.0);

    auto accumulate = [&](const MaskVector & mask, Reference reference) {
        for (size_t i = 0; i < cfg.alpha_grid.size(); i++) {
            const TaskVector delta = build_delta(mask, art.tau_a, cfg.alpha_grid[i]);
            const ParamVector candidate = transport(art.theta_b, delta, reference);
            out.val_accuracy[i] += evaluate(candidate, art.world.val, cfg.model);
            out.test_accuracy[i] += evaluate(candidate, art.world.test, cfg.model);
        }
    };

    double denom = 0.0;
    if (variant == "oracle") {
        accumulate(mask_agreement(art.sign_tau_a, art.oracle_ref), Reference::OracleTauB);
        denom = 1.0;
    } else {
        const int b = cfg.budgets.front();
        const Heuristic heuristic = cfg.heuristics.front();
        for (uint64_t seed : cfg.seeds) {
            const SelectionResult selection =
                select_subset(heuristic, b, art.world.train, art.features, subset_seed(seed, b));
            const LabeledDataset subset = gather(art.world.train, selection.all_indices(), "subset");
            const SignEstimate estimate =
                cfg.aggregations.front() == Aggregation::Majority
                    ? majority_vote_signs(art.theta_b, subset, cfg.model, cfg.zero_tol)
                    : mean_signs(art.theta_b, subset, cfg.model, cfg.zero_tol);
            accumulate(mask_agreement(art.sign_tau_a, estimate.signs), Reference::GradientSigns);
        }
        denom = static_cast<double>(cfg.seeds.size());
    }

    const double inv = 1.0 / denom;
    double best = -1.0;
    for (size_t i = 0; i < out.alphas.size(); i++) {
        out.val_accuracy[i] *= inv;
        out.test_accuracy[i] *= inv;
        if (out.val_accuracy[i] > best) {
            best = out.val_accuracy[i];
            out.selected_alpha = out.alphas[i];
        }
    }
    return out;
}

void save_alpha_sweep_csv(const AlphaSweepResult & sweep, const std::string & path) {
    std::string buf = "alpha,val_accuracy,test_accuracy,selected\n";
    for (size_t i = 0; i < sweep.alphas.size(); i++) {
        buf += format_double(sweep.alphas[i]) + "," + format_double(sweep.val_accuracy[i]) + "," +
               format_double(sweep.test_accuracy[i]) + "," +
               (sweep.alphas[i] == sweep.selected_alpha ? "1" : "0") + "\n";
    }
    write_text_atomic(path, buf);
}

ParamVector fewshot_baseline(const ParamVector & theta_b, const LabeledDataset & subset,
                             const TrainConfig & recipe, const ModelSpec & spec) {
    return train(theta_b, subset, recipe, spec);
}

std::string report_to_csv(const ExperimentReport & report) {
    std::string buf =
        "variant,strategy,aggregation,heuristic,b,alpha,seed,accuracy,loss,"
        "descent_inner_product,agreement_with_oracle\n";
    for (const auto & row : report.rows) {
        buf += row.variant + "," + row.strategy + "," + row.aggregation + "," + row.heuristic + "," +
               std::to_string(row.b) + "," + format_double(row.alpha) + "," +
               std::to_string(row.seed) + "," + format_double(row.accuracy) + "," +
               format_double(row.loss_value) + "," + format_double(row.descent_inner_product) + "," +
               pack_agreement(row.agreement_with_oracle) + "\n";
    }
    return buf;
}

std::string report_to_json(const ExperimentReport & report) {
    nlohmann::ordered_json j;
    j["version"] = kVersion;
    j["config_hash"] = report.config_hash;
    j["rows"] = nlohmann::ordered_json::array();
    for (const auto & row : report.rows) {
        nlohmann::ordered_json r;
        r["variant"] = row.variant;
        r["strategy"] = row.strategy;
        r["aggregation"] = row.aggregation;
        r["heuristic"] = row.heuristic;
        r["b"] = row.b;
        r["alpha"] = row.alpha;
        r["seed"] = row.seed;
        r["accuracy"] = row.accuracy;
        r["loss"] = row.loss_value;
        r["descent_inner_product"] = row.descent_inner_product;
        nlohmann::ordered_json agreement = nlohmann::ordered_json::object();
        for (const auto & a : row.agreement_with_oracle) {
            agreement[a.group] = {{"fraction", a.agree_fraction}, {"n", a.n_nonzero_pairs}};
        }
        r["agreement_with_oracle"] = std::move(agreement);
        j["rows"].push_back(std::move(r));
    }
    return j.dump(2) + "\n";
}

void report_emit(const ExperimentReport & report, const std::string & dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    write_text_atomic((fs::path(dir) / "report.csv").string(), report_to_csv(report));
    write_text_atomic((fs::path(dir) / "report.json").string(), report_to_json(report));
}

} // namespace gradfix
