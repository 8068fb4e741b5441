#include "gradfix.h"

#include "bound_lab.hpp"
#include "checkpoint.hpp"
#include "config.hpp"
#include "harness.hpp"
#include "rng.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>

using namespace gradfix;

struct gfx_config {
    ExperimentConfig cfg;
};
struct gfx_params {
    ParamVector v;
};
struct gfx_signs {
    SignVector v;
};
struct gfx_mask {
    MaskVector m;
};
struct gfx_dataset {
    LabeledDataset d;
};

namespace {

thread_local std::string g_last_error;

gfx_status to_status(errc code) {
    switch (code) {
        case errc::config:  return GFX_ERR_CONFIG;
        case errc::numeric: return GFX_ERR_NUMERIC;
        case errc::io:      return GFX_ERR_IO;
    }
    return GFX_ERR_UNKNOWN;
}

template <typename F>
gfx_status guarded(F && f) {
    try {
        f();
        g_last_error.clear();
        return GFX_OK;
    } catch (const Error & e) {
        g_last_error = e.what();
        return to_status(e.code());
    } catch (const std::exception & e) {
        g_last_error = e.what();
        return GFX_ERR_UNKNOWN;
    }
}

gfx_status fail_config(const char * msg) {
    g_last_error = msg;
    return GFX_ERR_CONFIG;
}

CsvSchema schema_of(const ExperimentConfig & cfg) {
    CsvSchema s;
    s.input_dim = cfg.model.input_dim;
    s.num_classes = cfg.model.num_classes;
    return s;
}

void emit_text(const char * out_path, const std::string & content) {
    if (out_path == nullptr) {
        fwrite(content.data(), 1, content.size(), stdout);
        return;
    }
    FILE * f = fopen(out_path, "wb");
    if (!f) {
        throw_io(std::string("cannot open for writing: ") + out_path);
    }
    const size_t written = fwrite(content.data(), 1, content.size(), f);
    fclose(f);
    if (written != content.size()) {
        throw_io(std::string("short write: ") + out_path);
    }
}

} // namespace

extern "C" {

const char * gfx_version(void) {
    return kVersion;
}

const char * gfx_last_error(void) {
    return g_last_error.c_str();
}

gfx_status gfx_config_default(gfx_config ** out) {
    if (!out) {
        return fail_config("out must not be NULL");
    }
    return guarded([&] { *out = new gfx_config{canonical_config()}; });
}

gfx_status gfx_config_load(const char * path, gfx_config ** out) {
    if (!path || !out) {
        return fail_config("path and out must not be NULL");
    }
    return guarded([&] { *out = new gfx_config{load_config(path)}; });
}

gfx_status gfx_config_set(gfx_config * cfg, const char * dotted_key, const char * value) {
    if (!cfg || !dotted_key || !value) {
        return fail_config("cfg, dotted_key and value must not be NULL");
    }
    return guarded([&] { apply_override(cfg->cfg, dotted_key, value); });
}

gfx_status gfx_config_hash(const gfx_config * cfg, char * buf, size_t buf_len) {
    if (!cfg || !buf) {
        return fail_config("cfg and buf must not be NULL");
    }
    return guarded([&] {
        const std::string h = config_hash(cfg->cfg);
        if (buf_len < h.size() + 1) {
            throw_config("buffer too small for config hash");
        }
        memcpy(buf, h.c_str(), h.size() + 1);
    });
}

void gfx_config_free(gfx_config * cfg) {
    delete cfg;
}

gfx_status gfx_params_load(const char * path, gfx_params ** out) {
    if (!path || !out) {
        return fail_config("path and out must not be NULL");
    }
    return guarded([&] { *out = new gfx_params{load_checkpoint(path)}; });
}

gfx_status gfx_params_save(const gfx_params * v, const char * path) {
    if (!v || !path) {
        return fail_config("params and path must not be NULL");
    }
    return guarded([&] { save_checkpoint(v->v, path); });
}

gfx_status gfx_params_numel(const gfx_params * v, int64_t * out) {
    if (!v || !out) {
        return fail_config("params and out must not be NULL");
    }
    *out = v->v.numel();
    return GFX_OK;
}

void gfx_params_free(gfx_params * v) {
    delete v;
}

gfx_status gfx_signs_load(const char * path, gfx_signs ** out) {
    if (!path || !out) {
        return fail_config("path and out must not be NULL");
    }
    return guarded([&] { *out = new gfx_signs{load_signs(path)}; });
}

gfx_status gfx_signs_save(const gfx_signs * v, const char * path) {
    if (!v || !path) {
        return fail_config("signs and path must not be NULL");
    }
    return guarded([&] { save_signs(v->v, path); });
}

void gfx_signs_free(gfx_signs * v) {
    delete v;
}

gfx_status gfx_mask_load(const char * path, gfx_mask ** out) {
    if (!path || !out) {
        return fail_config("path and out must not be NULL");
    }
    return guarded([&] { *out = new gfx_mask{load_mask(path)}; });
}

gfx_status gfx_mask_save(const gfx_mask * m, const char * path) {
    if (!m || !path) {
        return fail_config("mask and path must not be NULL");
    }
    return guarded([&] { save_mask(m->m, path); });
}

void gfx_mask_free(gfx_mask * m) {
    delete m;
}

gfx_status gfx_dataset_load_csv(const gfx_config * cfg, const char * path, gfx_dataset ** out) {
    if (!cfg || !path || !out) {
        return fail_config("cfg, path and out must not be NULL");
    }
    return guarded([&] { *out = new gfx_dataset{load_csv(path, schema_of(cfg->cfg))}; });
}

gfx_status gfx_dataset_size(const gfx_dataset * d, int64_t * out) {
    if (!d || !out) {
        return fail_config("dataset and out must not be NULL");
    }
    *out = d->d.size();
    return GFX_OK;
}

void gfx_dataset_free(gfx_dataset * d) {
    delete d;
}

gfx_status gfx_diff(const gfx_params * theta_ft, const gfx_params * theta_0, gfx_params ** tau) {
    if (!theta_ft || !theta_0 || !tau) {
        return fail_config("arguments must not be NULL");
    }
    return guarded([&] { *tau = new gfx_params{diff(theta_ft->v, theta_0->v)}; });
}

gfx_status gfx_add_scaled(const gfx_params * theta, const gfx_params * delta, double scale,
                          gfx_params ** out) {
    if (!theta || !delta || !out) {
        return fail_config("arguments must not be NULL");
    }
    return guarded([&] { *out = new gfx_params{add_scaled(theta->v, delta->v, scale)}; });
}

gfx_status gfx_sign_of(const gfx_params * v, double zero_tol, gfx_signs ** out) {
    if (!v || !out) {
        return fail_config("arguments must not be NULL");
    }
    return guarded([&] { *out = new gfx_signs{sign_of(v->v, zero_tol)}; });
}

gfx_status gfx_apply_mask(const gfx_mask * mask, const gfx_params * tau, gfx_params ** out) {
    if (!mask || !tau || !out) {
        return fail_config("arguments must not be NULL");
    }
    return guarded([&] { *out = new gfx_params{apply_mask(mask->m, tau->v)}; });
}

gfx_status gfx_agreement_stats(const gfx_signs * a, const gfx_signs * b, int per_segment,
                               const char * out_path) {
    if (!a || !b) {
        return fail_config("arguments must not be NULL");
    }
    return guarded([&] {
        const auto rows =
            agreement_stats(a->v, b->v, per_segment ? Grouping::PerSegment : Grouping::Whole);
        std::string buf = "group,agree_fraction,n_nonzero_pairs\n";
        for (const auto & r : rows) {
            buf += r.group + "," + format_double(r.agree_fraction) + "," +
                   std::to_string(r.n_nonzero_pairs) + "\n";
        }
        emit_text(out_path, buf);
    });
}

gfx_status gfx_world_generate(const gfx_config * cfg, uint64_t seed, const char * out_dir) {
    if (!cfg || !out_dir) {
        return fail_config("cfg and out_dir must not be NULL");
    }
    return guarded([&] {
        WorldConfig wc = cfg->cfg.world;
        wc.seed = seed;
        const World w = make_world(wc);
        std::error_code ec;
        std::filesystem::create_directories(out_dir, ec);
        const std::filesystem::path dir(out_dir);
        save_csv(w.pretrain_a, (dir / "pretrain_a.csv").string());
        save_csv(w.pretrain_b, (dir / "pretrain_b.csv").string());
        save_csv(w.train, (dir / "train.csv").string());
        save_csv(w.val, (dir / "val.csv").string());
        save_csv(w.test, (dir / "test.csv").string());
    });
}

gfx_status gfx_train(const gfx_config * cfg, const char * section, const gfx_params * theta0,
                     const gfx_dataset * data, uint64_t seed, gfx_params ** out) {
    if (!cfg || !section || !data || !out) {
        return fail_config("cfg, section, data and out must not be NULL");
    }
    return guarded([&] {
        TrainConfig recipe;
        const std::string s(section);
        if (s == "pretrain") {
            recipe = cfg->cfg.pretrain;
        } else if (s == "finetune") {
            recipe = cfg->cfg.finetune;
        } else if (s == "fewshot") {
            recipe = cfg->cfg.fewshot;
        } else {
            throw_config("unknown train section '" + s + "'");
        }
        recipe.seed = derive_seed(seed, "train");
        const ParamVector start =
            theta0 ? theta0->v : init_params(cfg->cfg.model, derive_seed(seed, "init"));
        *out = new gfx_params{train(start, data->d, recipe, cfg->cfg.model)};
    });
}

gfx_status gfx_evaluate(const gfx_config * cfg, const gfx_params * theta, const gfx_dataset * data,
                        double * accuracy, double * mean_loss) {
    if (!cfg || !theta || !data || !accuracy) {
        return fail_config("cfg, theta, data and accuracy must not be NULL");
    }
    return guarded([&] {
        *accuracy = evaluate(theta->v, data->d, cfg->cfg.model);
        if (mean_loss) {
            *mean_loss = loss(theta->v, data->d, cfg->cfg.model);
        }
    });
}

gfx_status gfx_select_subset(const gfx_config * cfg, const gfx_dataset * data,
                             const gfx_params * theta_embed, const char * heuristic, int budget,
                             uint64_t seed, const char * out_csv, gfx_dataset ** out_subset) {
    if (!cfg || !data || !heuristic) {
        return fail_config("cfg, data and heuristic must not be NULL");
    }
    return guarded([&] {
        const std::string name(heuristic);
        const bool coverage = name == "coreset_coverage";
        const Heuristic h = coverage ? Heuristic::Coreset : parse_heuristic(name);
        SelectionResult sel;
        if (h == Heuristic::Random) {
            sel = select_random(data->d, budget, seed);
        } else {
            if (!theta_embed) {
                throw_config("structured heuristics need an embedding checkpoint");
            }
            const FeatureSet features = embed(theta_embed->v, data->d, cfg->cfg.model);
            switch (h) {
                case Heuristic::Herding:  sel = select_herding(features, budget); break;
                case Heuristic::KMedoids: sel = select_kmedoids(features, budget); break;
                case Heuristic::Coreset:
                    sel = select_coreset(features, budget,
                                         coverage ? CoresetRule::Coverage : CoresetRule::Proximity);
                    break;
                case Heuristic::Random:   break;
            }
        }
        if (out_csv) {
            save_selection_csv(sel, out_csv);
        }
        if (out_subset) {
            *out_subset = new gfx_dataset{gather(data->d, sel.all_indices(), "subset")};
        }
    });
}

gfx_status gfx_estimate_signs(const gfx_config * cfg, const gfx_params * theta_b,
                              const gfx_dataset * subset, const char * aggregation,
                              const char * margins_csv, gfx_signs ** out) {
    if (!cfg || !theta_b || !subset || !aggregation || !out) {
        return fail_config("arguments must not be NULL");
    }
    return guarded([&] {
        const Aggregation agg = parse_aggregation(aggregation);
        const SignEstimate est =
            agg == Aggregation::Majority
                ? majority_vote_signs(theta_b->v, subset->d, cfg->cfg.model, cfg->cfg.zero_tol)
                : mean_signs(theta_b->v, subset->d, cfg->cfg.model, cfg->cfg.zero_tol);
        if (margins_csv) {
            save_vote_margin_csv(est, margins_csv);
        }
        *out = new gfx_signs{est.signs};
    });
}

gfx_status gfx_build_mask(const gfx_config * cfg, const char * strategy, const gfx_params * tau_a,
                          const gfx_signs * ref, uint64_t seed, gfx_mask ** out) {
    if (!cfg || !strategy || !tau_a || !out) {
        return fail_config("cfg, strategy, tau_a and out must not be NULL");
    }
    return guarded([&] {
        const MaskStrategy s = parse_strategy(strategy);
        const SignVector sign_tau_a = sign_of(tau_a->v, cfg->cfg.zero_tol);
        if (s != MaskStrategy::Random && !ref) {
            throw_config("strategy '" + std::string(strategy) + "' needs reference signs");
        }
        const SignVector empty;
        *out = new gfx_mask{build_mask(s, sign_tau_a, ref ? ref->v : empty, seed)};
    });
}

gfx_status gfx_transport(const gfx_params * theta_b, const gfx_mask * mask, const gfx_params * tau_a,
                         double alpha, const char * reference, gfx_params ** out) {
    if (!theta_b || !mask || !tau_a || !reference || !out) {
        return fail_config("arguments must not be NULL");
    }
    return guarded([&] {
        const Reference ref = parse_reference(reference);
        const TaskVector delta = build_delta(mask->m, tau_a->v, alpha);
        *out = new gfx_params{transport(theta_b->v, delta, ref)};
    });
}

gfx_status gfx_descent_check(const gfx_params * gradient, const gfx_params * delta,
                             double * inner_product) {
    if (!gradient || !delta || !inner_product) {
        return fail_config("arguments must not be NULL");
    }
    return guarded([&] { *inner_product = descent_check(gradient->v, delta->v); });
}

gfx_status gfx_hoeffding_bound(double p, int64_t n, double * out) {
    if (!out) {
        return fail_config("out must not be NULL");
    }
    return guarded([&] { *out = hoeffding_bound(p, n); });
}

gfx_status gfx_exact_binomial_majority(double p, int64_t n, double * out) {
    if (!out) {
        return fail_config("out must not be NULL");
    }
    return guarded([&] { *out = exact_binomial_majority(p, n); });
}

gfx_status gfx_boundlab_bernoulli(const double * p_grid, size_t p_count, const int64_t * n_grid,
                                  size_t n_count, int64_t trials, uint64_t seed,
                                  const char * out_path) {
    if (!p_grid || !n_grid || p_count == 0 || n_count == 0) {
        return fail_config("p_grid and n_grid must be non-empty");
    }
    return guarded([&] {
        std::string buf = "p,N,trials,empirical,wilson_lo,wilson_hi,exact_binomial,hoeffding\n";
        for (size_t i = 0; i < p_count; i++) {
            for (size_t j = 0; j < n_count; j++) {
                NoiseChannel ch;
                ch.kind = NoiseKind::Bernoulli;
                ch.true_sign = +1;
                ch.p = p_grid[i];
                const VoteSimResult sim = simulate_vote_success(ch, n_grid[j], trials, seed);
                buf += format_double(p_grid[i]) + "," + std::to_string(n_grid[j]) + "," +
                       std::to_string(trials) + "," + format_double(sim.empirical_rate) + "," +
                       format_double(sim.wilson_lo) + "," + format_double(sim.wilson_hi) + "," +
                       format_double(exact_binomial_majority(p_grid[i], n_grid[j])) + "," +
                       format_double(hoeffding_bound(p_grid[i], n_grid[j])) + "\n";
            }
        }
        emit_text(out_path, buf);
    });
}

gfx_status gfx_boundlab_compare(const char * channel, double signal, double sigma, double nu,
                                int64_t n, int64_t trials, uint64_t seed, const char * out_path) {
    if (!channel) {
        return fail_config("channel must not be NULL");
    }
    return guarded([&] {
        NoiseChannel ch;
        const std::string kind(channel);
        if (kind == "gaussian") {
            ch.kind = NoiseKind::Gaussian;
        } else if (kind == "student_t") {
            ch.kind = NoiseKind::StudentT;
        } else {
            throw_config("unknown channel '" + kind + "'");
        }
        ch.signal = signal;
        ch.sigma = sigma;
        ch.nu = nu;
        const PairedCompareResult r = compare_mean_vs_majority(ch, n, trials, seed);
        std::string buf = "channel,signal,sigma,nu,N,trials,rate_majority,rate_mean,diff,diff_lo,diff_hi\n";
        buf += kind + "," + format_double(signal) + "," + format_double(sigma) + "," +
               format_double(nu) + "," + std::to_string(n) + "," + std::to_string(trials) + "," +
               format_double(r.rate_majority) + "," + format_double(r.rate_mean) + "," +
               format_double(r.diff) + "," + format_double(r.diff_lo) + "," +
               format_double(r.diff_hi) + "\n";
        emit_text(out_path, buf);
    });
}

gfx_status gfx_pipeline_run(const gfx_config * cfg, const char * out_dir) {
    if (!cfg) {
        return fail_config("cfg must not be NULL");
    }
    return guarded([&] {
        const std::string dir = out_dir ? out_dir : cfg->cfg.output_dir;
        run_pipeline_files(cfg->cfg, dir);
    });
}

gfx_status gfx_sweep_alpha(const gfx_config * cfg, const char * variant, const char * out_path,
                           double * selected_alpha) {
    if (!cfg || !variant) {
        return fail_config("cfg and variant must not be NULL");
    }
    return guarded([&] {
        const AlphaSweepResult sweep = sweep_alpha(cfg->cfg, variant);
        std::string buf = "alpha,val_accuracy,test_accuracy,selected\n";
        for (size_t i = 0; i < sweep.alphas.size(); i++) {
            buf += format_double(sweep.alphas[i]) + "," + format_double(sweep.val_accuracy[i]) + "," +
                   format_double(sweep.test_accuracy[i]) + "," +
                   (sweep.alphas[i] == sweep.selected_alpha ? "1" : "0") + "\n";
        }
        emit_text(out_path, buf);
        if (selected_alpha) {
            *selected_alpha = sweep.selected_alpha;
        }
    });
}

} // extern "C"
