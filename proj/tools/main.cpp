// gradfix command-line front end. Talks to the core exclusively through the
// public C API in gradfix.h; exit codes mirror gfx_status values.

#include "gradfix.h"

#include <CLI11.hpp>

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

namespace {

template <typename T, void (*Free)(T *)>
struct Handle {
    T * ptr = nullptr;
    ~Handle() { Free(ptr); }
    T ** out() { return &ptr; }
    operator T *() const { return ptr; }
    Handle() = default;
    Handle(const Handle &) = delete;
    Handle & operator=(const Handle &) = delete;
};

using ConfigH = Handle<gfx_config, gfx_config_free>;
using ParamsH = Handle<gfx_params, gfx_params_free>;
using SignsH = Handle<gfx_signs, gfx_signs_free>;
using MaskH = Handle<gfx_mask, gfx_mask_free>;
using DatasetH = Handle<gfx_dataset, gfx_dataset_free>;

int report(gfx_status st) {
    if (st != GFX_OK) {
        fprintf(stderr, "gradfix: error: %s\n", gfx_last_error());
    }
    return static_cast<int>(st);
}

#define CHECK(expr)                                \
    do {                                           \
        const gfx_status st_ = (expr);             \
        if (st_ != GFX_OK) {                       \
            return report(st_);                    \
        }                                          \
    } while (0)

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;  // section.key=value
};

void add_common(CLI::App * cmd, CommonOpts & opts) {
    cmd->add_option("--config", opts.config_path, "config file (sectioned key=value)");
    cmd->add_option("--set", opts.overrides, "override a config value, section.key=value")
        ->type_name("KEY=VALUE");
}

int load_cfg(const CommonOpts & opts, ConfigH & cfg) {
    if (opts.config_path.empty()) {
        CHECK(gfx_config_default(cfg.out()));
    } else {
        CHECK(gfx_config_load(opts.config_path.c_str(), cfg.out()));
    }
    for (const auto & kv : opts.overrides) {
        const size_t eq = kv.find('=');
        if (eq == std::string::npos) {
            fprintf(stderr, "gradfix: error: --set expects section.key=value, got '%s'\n", kv.c_str());
            return GFX_ERR_CONFIG;
        }
        CHECK(gfx_config_set(cfg, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()));
    }
    return 0;
}

const char * opt_cstr(const std::string & s) {
    return s.empty() ? nullptr : s.c_str();
}

} // namespace

int main(int argc, char ** argv) {
    CLI::App app{"gradient-sign masked task-vector transport toolkit"};
    app.require_subcommand(1);

    // world
    auto w = std::make_shared<CommonOpts>();
    std::string w_out;
    uint64_t w_seed = 0;
    auto * world_cmd = app.add_subcommand("world", "generate the synthetic pretrain/downstream datasets");
    add_common(world_cmd, *w);
    world_cmd->add_option("--out", w_out, "output directory")->required();
    world_cmd->add_option("--seed", w_seed, "world seed")->required();

    // pretrain / finetune
    struct TrainOpts {
        CommonOpts common;
        std::string data, base, out, tau;
        uint64_t seed = 0;
    };
    auto pre = std::make_shared<TrainOpts>();
    auto * pretrain_cmd = app.add_subcommand("pretrain", "train a model from a fresh initialization");
    add_common(pretrain_cmd, pre->common);
    pretrain_cmd->add_option("--data", pre->data, "training CSV")->required();
    pretrain_cmd->add_option("--out", pre->out, "output checkpoint")->required();
    pretrain_cmd->add_option("--seed", pre->seed, "init and batch-order seed")->required();

    auto fin = std::make_shared<TrainOpts>();
    auto * finetune_cmd = app.add_subcommand("finetune", "fine-tune from a checkpoint");
    add_common(finetune_cmd, fin->common);
    finetune_cmd->add_option("--base", fin->base, "starting checkpoint")->required();
    finetune_cmd->add_option("--data", fin->data, "training CSV")->required();
    finetune_cmd->add_option("--out", fin->out, "output checkpoint")->required();
    finetune_cmd->add_option("--tau", fin->tau, "also write the task vector here");
    finetune_cmd->add_option("--seed", fin->seed, "batch-order seed")->required();

    // signs
    struct SignsOpts {
        CommonOpts common;
        std::string theta, data, embed, out, margins, selection;
        std::string heuristic = "random";
        std::string aggregation = "majority";
        int budget = 1;
        uint64_t seed = 0;
    };
    auto sg = std::make_shared<SignsOpts>();
    auto * signs_cmd = app.add_subcommand("signs", "estimate target gradient signs from a subset");
    add_common(signs_cmd, sg->common);
    signs_cmd->add_option("--theta", sg->theta, "target model checkpoint")->required();
    signs_cmd->add_option("--data", sg->data, "downstream training CSV")->required();
    signs_cmd->add_option("--budget", sg->budget, "examples per class")->required();
    signs_cmd->add_option("--heuristic", sg->heuristic, "random|herding|kmedoids|coreset");
    signs_cmd->add_option("--aggregation", sg->aggregation, "majority|mean");
    signs_cmd->add_option("--embed", sg->embed, "encoder checkpoint for structured heuristics");
    signs_cmd->add_option("--out", sg->out, "output sign file")->required();
    signs_cmd->add_option("--margins", sg->margins, "vote-margin histogram CSV");
    signs_cmd->add_option("--selection", sg->selection, "write the selected subset CSV");
    signs_cmd->add_option("--seed", sg->seed, "subset seed")->required();

    // select
    auto se = std::make_shared<SignsOpts>();
    auto * select_cmd = app.add_subcommand("select", "run a subset-selection heuristic");
    add_common(select_cmd, se->common);
    select_cmd->add_option("--data", se->data, "downstream training CSV")->required();
    select_cmd->add_option("--budget", se->budget, "examples per class")->required();
    select_cmd->add_option("--heuristic", se->heuristic, "random|herding|kmedoids|coreset|coreset_coverage");
    select_cmd->add_option("--embed", se->embed, "encoder checkpoint for structured heuristics");
    select_cmd->add_option("--out", se->out, "selection CSV (class,rank,source_id)")->required();
    select_cmd->add_option("--seed", se->seed, "selection seed")->required();

    // mask
    struct MaskOpts {
        CommonOpts common;
        std::string tau, reference, out;
        std::string strategy = "agreement";
        uint64_t seed = 0;
        bool seed_given = false;
    };
    auto mk = std::make_shared<MaskOpts>();
    auto * mask_cmd = app.add_subcommand("mask", "build a transport mask from sign structures");
    add_common(mask_cmd, mk->common);
    mask_cmd->add_option("--tau", mk->tau, "source task vector checkpoint")->required();
    mask_cmd->add_option("--strategy", mk->strategy, "agreement|force_agreement|random");
    mask_cmd->add_option("--reference", mk->reference, "reference sign file");
    mask_cmd->add_option("--out", mk->out, "output mask file")->required();
    auto * mask_seed = mask_cmd->add_option("--seed", mk->seed, "seed (random strategy)");

    // transport
    struct TransportOpts {
        std::string theta, mask, tau, reference = "gradient_signs", out;
        double alpha = 1.0;
    };
    auto tr = std::make_shared<TransportOpts>();
    auto * transport_cmd = app.add_subcommand("transport", "apply the masked task vector");
    transport_cmd->add_option("--theta", tr->theta, "target model checkpoint")->required();
    transport_cmd->add_option("--mask", tr->mask, "mask file")->required();
    transport_cmd->add_option("--tau", tr->tau, "source task vector checkpoint")->required();
    transport_cmd->add_option("--alpha", tr->alpha, "scaling factor in (0,1]");
    transport_cmd->add_option("--reference", tr->reference, "gradient_signs|oracle_tau_b");
    transport_cmd->add_option("--out", tr->out, "output checkpoint")->required();

    // eval
    auto ev = std::make_shared<TrainOpts>();
    auto * eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a CSV dataset");
    add_common(eval_cmd, ev->common);
    eval_cmd->add_option("--theta", ev->base, "model checkpoint")->required();
    eval_cmd->add_option("--data", ev->data, "evaluation CSV")->required();

    // agree
    struct AgreeOpts {
        std::string a, b, out;
        bool per_segment = false;
    };
    auto ag = std::make_shared<AgreeOpts>();
    auto * agree_cmd = app.add_subcommand("agree", "sign agreement statistics between two sign files");
    agree_cmd->add_option("--a", ag->a, "first sign file")->required();
    agree_cmd->add_option("--b", ag->b, "second sign file")->required();
    agree_cmd->add_flag("--per-segment", ag->per_segment, "group by segment instead of whole");
    agree_cmd->add_option("--out", ag->out, "output CSV (stdout when omitted)");

    // boundlab
    struct BoundOpts {
        std::vector<double> p_grid = {0.55, 0.6, 0.7, 0.9};
        std::vector<int64_t> n_grid = {1, 5, 25, 101};
        int64_t trials = 100000;
        uint64_t seed = 0;
        std::string out;
        std::string channel;  // empty -> bernoulli grid mode
        double signal = 0.2;
        double sigma = 1.0;
        double nu = 2.0;
        int64_t n_samples = 25;
        bool compare = false;
    };
    auto bl = std::make_shared<BoundOpts>();
    auto * bound_cmd = app.add_subcommand("boundlab", "majority-vote concentration simulations");
    bound_cmd->add_option("--p", bl->p_grid, "per-sample accuracy grid");
    bound_cmd->add_option("--n", bl->n_grid, "vote-count grid");
    bound_cmd->add_option("--trials", bl->trials, "Monte-Carlo trials per cell");
    bound_cmd->add_option("--seed", bl->seed, "simulation seed")->required();
    bound_cmd->add_option("--out", bl->out, "output CSV (stdout when omitted)");
    bound_cmd->add_flag("--compare", bl->compare, "paired majority-vs-mean comparison");
    bound_cmd->add_option("--channel", bl->channel, "gaussian|student_t (compare mode)");
    bound_cmd->add_option("--signal", bl->signal, "true coordinate value (compare mode)");
    bound_cmd->add_option("--sigma", bl->sigma, "noise scale (compare mode)");
    bound_cmd->add_option("--nu", bl->nu, "student_t degrees of freedom");
    bound_cmd->add_option("--n-samples", bl->n_samples, "votes per trial (compare mode)");

    // pipeline
    auto pl = std::make_shared<CommonOpts>();
    std::string pl_out;
    auto * pipeline_cmd = app.add_subcommand("pipeline", "run the full experiment protocol");
    add_common(pipeline_cmd, *pl);
    pipeline_cmd->add_option("--out", pl_out, "output directory (default: config output_dir)");

    // sweep-alpha
    auto sa = std::make_shared<CommonOpts>();
    std::string sa_variant = "oracle";
    std::string sa_out;
    auto * sweep_cmd = app.add_subcommand("sweep-alpha", "scaling-factor sensitivity sweep");
    add_common(sweep_cmd, *sa);
    sweep_cmd->add_option("--variant", sa_variant, "oracle|gradfix");
    sweep_cmd->add_option("--out", sa_out, "output CSV (stdout when omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp & e) {
        return app.exit(e);
    } catch (const CLI::ParseError & e) {
        app.exit(e);
        return GFX_ERR_CONFIG;
    }

    if (world_cmd->parsed()) {
        ConfigH cfg;
        if (int rc = load_cfg(*w, cfg)) {
            return rc;
        }
        CHECK(gfx_world_generate(cfg, w_seed, w_out.c_str()));
        printf("wrote datasets to %s\n", w_out.c_str());
        return 0;
    }

    if (pretrain_cmd->parsed() || finetune_cmd->parsed()) {
        const bool is_pretrain = pretrain_cmd->parsed();
        TrainOpts & o = is_pretrain ? *pre : *fin;
        ConfigH cfg;
        if (int rc = load_cfg(o.common, cfg)) {
            return rc;
        }
        DatasetH data;
        CHECK(gfx_dataset_load_csv(cfg, o.data.c_str(), data.out()));
        ParamsH base;
        if (!is_pretrain) {
            CHECK(gfx_params_load(o.base.c_str(), base.out()));
        }
        ParamsH result;
        CHECK(gfx_train(cfg, is_pretrain ? "pretrain" : "finetune", base.ptr, data, o.seed,
                        result.out()));
        CHECK(gfx_params_save(result, o.out.c_str()));
        if (!o.tau.empty()) {
            ParamsH tau;
            CHECK(gfx_diff(result, base, tau.out()));
            CHECK(gfx_params_save(tau, o.tau.c_str()));
        }
        printf("wrote %s\n", o.out.c_str());
        return 0;
    }

    if (signs_cmd->parsed()) {
        ConfigH cfg;
        if (int rc = load_cfg(sg->common, cfg)) {
            return rc;
        }
        DatasetH data;
        CHECK(gfx_dataset_load_csv(cfg, sg->data.c_str(), data.out()));
        ParamsH theta;
        CHECK(gfx_params_load(sg->theta.c_str(), theta.out()));
        ParamsH embed;
        if (!sg->embed.empty()) {
            CHECK(gfx_params_load(sg->embed.c_str(), embed.out()));
        }
        DatasetH subset;
        CHECK(gfx_select_subset(cfg, data, embed.ptr, sg->heuristic.c_str(), sg->budget, sg->seed,
                                opt_cstr(sg->selection), subset.out()));
        SignsH signs;
        CHECK(gfx_estimate_signs(cfg, theta, subset, sg->aggregation.c_str(),
                                 opt_cstr(sg->margins), signs.out()));
        CHECK(gfx_signs_save(signs, sg->out.c_str()));
        printf("wrote %s\n", sg->out.c_str());
        return 0;
    }

    if (select_cmd->parsed()) {
        ConfigH cfg;
        if (int rc = load_cfg(se->common, cfg)) {
            return rc;
        }
        DatasetH data;
        CHECK(gfx_dataset_load_csv(cfg, se->data.c_str(), data.out()));
        ParamsH embed;
        if (!se->embed.empty()) {
            CHECK(gfx_params_load(se->embed.c_str(), embed.out()));
        }
        CHECK(gfx_select_subset(cfg, data, embed.ptr, se->heuristic.c_str(), se->budget, se->seed,
                                se->out.c_str(), nullptr));
        printf("wrote %s\n", se->out.c_str());
        return 0;
    }

    if (mask_cmd->parsed()) {
        if (mk->strategy == "random" && mask_seed->count() == 0) {
            fprintf(stderr, "gradfix: error: --seed is required for the random strategy\n");
            return GFX_ERR_CONFIG;
        }
        ConfigH cfg;
        if (int rc = load_cfg(mk->common, cfg)) {
            return rc;
        }
        ParamsH tau;
        CHECK(gfx_params_load(mk->tau.c_str(), tau.out()));
        SignsH ref;
        if (!mk->reference.empty()) {
            CHECK(gfx_signs_load(mk->reference.c_str(), ref.out()));
        }
        MaskH mask;
        CHECK(gfx_build_mask(cfg, mk->strategy.c_str(), tau, ref.ptr, mk->seed, mask.out()));
        CHECK(gfx_mask_save(mask, mk->out.c_str()));
        printf("wrote %s\n", mk->out.c_str());
        return 0;
    }

    if (transport_cmd->parsed()) {
        ParamsH theta;
        CHECK(gfx_params_load(tr->theta.c_str(), theta.out()));
        MaskH mask;
        CHECK(gfx_mask_load(tr->mask.c_str(), mask.out()));
        ParamsH tau;
        CHECK(gfx_params_load(tr->tau.c_str(), tau.out()));
        ParamsH result;
        CHECK(gfx_transport(theta, mask, tau, tr->alpha, tr->reference.c_str(), result.out()));
        CHECK(gfx_params_save(result, tr->out.c_str()));
        printf("wrote %s\n", tr->out.c_str());
        return 0;
    }

    if (eval_cmd->parsed()) {
        ConfigH cfg;
        if (int rc = load_cfg(ev->common, cfg)) {
            return rc;
        }
        ParamsH theta;
        CHECK(gfx_params_load(ev->base.c_str(), theta.out()));
        DatasetH data;
        CHECK(gfx_dataset_load_csv(cfg, ev->data.c_str(), data.out()));
        double accuracy = 0.0;
        double mean_loss = 0.0;
        CHECK(gfx_evaluate(cfg, theta, data, &accuracy, &mean_loss));
        printf("accuracy=%.6f loss=%.6f\n", accuracy, mean_loss);
        return 0;
    }

    if (agree_cmd->parsed()) {
        SignsH a;
        SignsH b;
        CHECK(gfx_signs_load(ag->a.c_str(), a.out()));
        CHECK(gfx_signs_load(ag->b.c_str(), b.out()));
        CHECK(gfx_agreement_stats(a, b, ag->per_segment ? 1 : 0, opt_cstr(ag->out)));
        return 0;
    }

    if (bound_cmd->parsed()) {
        if (bl->compare) {
            if (bl->channel.empty()) {
                fprintf(stderr, "gradfix: error: --compare needs --channel\n");
                return GFX_ERR_CONFIG;
            }
            CHECK(gfx_boundlab_compare(bl->channel.c_str(), bl->signal, bl->sigma, bl->nu,
                                       bl->n_samples, bl->trials, bl->seed, opt_cstr(bl->out)));
        } else {
            CHECK(gfx_boundlab_bernoulli(bl->p_grid.data(), bl->p_grid.size(), bl->n_grid.data(),
                                         bl->n_grid.size(), bl->trials, bl->seed,
                                         opt_cstr(bl->out)));
        }
        return 0;
    }

    if (pipeline_cmd->parsed()) {
        ConfigH cfg;
        if (int rc = load_cfg(*pl, cfg)) {
            return rc;
        }
        CHECK(gfx_pipeline_run(cfg, opt_cstr(pl_out)));
        printf("pipeline complete\n");
        return 0;
    }

    if (sweep_cmd->parsed()) {
        ConfigH cfg;
        if (int rc = load_cfg(*sa, cfg)) {
            return rc;
        }
        double selected = 0.0;
        CHECK(gfx_sweep_alpha(cfg, sa_variant.c_str(), opt_cstr(sa_out), &selected));
        fprintf(stderr, "selected alpha = %g\n", selected);
        return 0;
    }

    return GFX_ERR_CONFIG;
}
