#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"

#include "iaunet/checkpoint.hpp"
#include "iaunet/config.hpp"
#include "iaunet/data.hpp"
#include "iaunet/evaluation.hpp"
#include "iaunet/trainer.hpp"
#include "iaunet/verify.hpp"

namespace fs = std::filesystem;
using namespace iaunet;

namespace {

// Exit codes: 0 success, 1 usage, 2 data validation, 3 numeric failure.
constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitNumeric = 3;

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;  // key=value
    std::int64_t seed = -1;              // threaded to all RNG consumers when set
};

config::RunConfig build_config(const CommonArgs& args) {
    config::RunConfig cfg;
    if (!args.config_path.empty()) cfg.apply_file(args.config_path);
    for (const auto& kv : args.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw UsageError("--set expects key=value, got " + kv);
        cfg.apply_kv(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (args.seed >= 0) {
        cfg.train.seed = static_cast<std::uint64_t>(args.seed);
        cfg.synth.seed = static_cast<std::uint64_t>(args.seed);
    }
    cfg.validate();
    return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "JSON config of flat dotted keys");
    cmd->add_option("--set", args.overrides, "override a config key (key=value, repeatable)");
    cmd->add_option("--seed", args.seed, "seed threaded to all RNG consumers");
}

nn::Tensor<float> load_image_checked(const std::string& path) {
    if (!fs::exists(path)) throw ValidationError("image not found: " + path);
    return data::read_image(path);
}

template <typename T>
void log_step(std::ofstream& log, std::int64_t step, const train::StepMetrics& m, const train::TrainConfig& cfg) {
    nlohmann::json j = {{"step", step},       {"total", m.total},          {"seg", m.seg},
                        {"tri", m.tri},       {"grad_norm", m.grad_norm},  {"lr", cfg.lr}};
    log << j.dump() << "\n";
}

template <typename T>
int run_train(const config::RunConfig& cfg, const std::string& manifest, const std::string& pool_path,
              const std::string& out_dir, const std::string& resume) {
    const bool binary = cfg.train.loss.mode == losses::SegMode::binary;
    auto records = data::load_dataset(manifest, binary, cfg.model.num_classes);
    std::vector<data::SampleRecord> pool;
    if (!pool_path.empty()) pool = data::load_pool(pool_path);

    fs::create_directories(out_dir);
    IAUNet<T> model(cfg.model, cfg.train.seed);
    train::Trainer<T> trainer(model, cfg.train, records, pool);
    if (!resume.empty()) trainer.restore(resume);

    std::ofstream log(fs::path(out_dir) / "train_log.jsonl",
                      resume.empty() ? std::ios::trunc : std::ios::app);
    if (!log) throw IoError("cannot open training log in " + out_dir);

    trainer.run([&](std::int64_t step, const train::StepMetrics& m) {
        if ((step + 1) % cfg.train.log_every == 0 || step + 1 == trainer.total_steps())
            log_step<T>(log, step, m, cfg.train);
    });
    const std::string ckpt_path = (fs::path(out_dir) / "final.ckpt").string();
    trainer.save_checkpoint(ckpt_path);
    std::ofstream cfg_echo(fs::path(out_dir) / "config.json");
    cfg_echo << cfg.to_flat_json().dump(1) << "\n";
    std::cout << "trained " << trainer.total_steps() << " steps -> " << ckpt_path << "\n";
    return 0;
}

template <typename T>
int run_cv(const config::RunConfig& cfg, const std::string& manifest, const std::string& pool_path, int k,
           const std::string& out_dir) {
    const bool binary = cfg.train.loss.mode == losses::SegMode::binary;
    auto records = data::load_dataset(manifest, binary, cfg.model.num_classes);
    std::vector<data::SampleRecord> pool;
    if (!pool_path.empty()) pool = data::load_pool(pool_path);
    fs::create_directories(out_dir);

    auto result = train::run_cross_validation<T>(records, pool, cfg.model, cfg.train, k, cfg.eval_threshold,
                                                 [&](int fold, const eval::MetricReport& r) {
                                                     std::cout << "fold " << fold << ": dice " << r.dice_mean
                                                               << " iou " << r.iou_mean << "\n";
                                                 });
    for (const auto& r : result.fold_reports) {
        std::ofstream out(fs::path(out_dir) / ("fold_" + std::to_string(*r.fold_id) + ".json"));
        out << r.to_json().dump(1) << "\n";
    }
    nlohmann::json agg = {{"k", k},
                          {"dice_mean", result.aggregate.dice_mean},
                          {"dice_std", result.aggregate.dice_std},
                          {"iou_mean", result.aggregate.iou_mean},
                          {"iou_std", result.aggregate.iou_std}};
    std::ofstream(fs::path(out_dir) / "aggregate.json") << agg.dump(1) << "\n";
    eval::NamedScores scores;
    for (const auto& r : result.fold_reports)
        scores.push_back({"fold" + std::to_string(*r.fold_id), {r.dice_mean, r.iou_mean}});
    eval::write_comparison_table(scores, (fs::path(out_dir) / "folds.txt").string(),
                                 (fs::path(out_dir) / "folds.csv").string());
    std::cout << "cv aggregate: dice " << result.aggregate.dice_mean << " +- " << result.aggregate.dice_std
              << ", iou " << result.aggregate.iou_mean << " +- " << result.aggregate.iou_std << "\n";
    return 0;
}

template <typename T>
int run_eval(const config::RunConfig& cfg, const std::string& ckpt_path, const std::string& manifest,
             const std::string& out_dir) {
    auto model = ckpt::load_model<T>(ckpt_path);
    const bool binary = cfg.train.loss.mode == losses::SegMode::binary;
    auto records = data::load_dataset(manifest, binary, model->config().num_classes);
    fs::create_directories(fs::path(out_dir) / "overlays");

    eval::MetricReport report = eval::evaluate(*model, records, cfg.eval_threshold);
    std::ofstream(fs::path(out_dir) / "report.json") << report.to_json().dump(1) << "\n";
    eval::NamedScores scores{{"model", {report.dice_mean, report.iou_mean}}};
    eval::write_comparison_table(scores, (fs::path(out_dir) / "table.txt").string(),
                                 (fs::path(out_dir) / "table.csv").string());
    for (const auto& r : records) {
        const auto image = data::read_image(r.image_path);
        const auto gt = eval::mask_from_float(data::read_mask(r.mask_path));
        const auto pred = eval::predict_mask(*model, image, cfg.eval_threshold);
        const std::string stem = fs::path(r.image_path).stem().string();
        eval::write_overlay(image, pred, gt, (fs::path(out_dir) / "overlays" / (stem + ".png")).string());
    }
    std::cout << "dice " << report.dice_mean << " +- " << report.dice_std << ", iou " << report.iou_mean << " +- "
              << report.iou_std << " over " << report.per_image.size() << " images\n";
    return 0;
}

template <typename T>
int run_predict(const config::RunConfig& cfg, const std::string& ckpt_path, const std::string& image_path,
                const std::string& out_path, double threshold) {
    (void)cfg;
    auto model = ckpt::load_model<T>(ckpt_path);
    const auto image = load_image_checked(image_path);
    const eval::Mask mask = eval::predict_mask(*model, image, threshold);
    nn::Tensor<float> out({1, mask.dim(1), mask.dim(2)});
    for (std::int64_t i = 0; i < mask.numel(); ++i) out[i] = mask[i] ? 1.0f : 0.0f;
    data::write_mask(out_path, out);
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

void print_suite(const verify::SuiteReport& suite) {
    for (const auto& line : suite.lines)
        std::cout << (line.pass ? "[PASS] " : "[FAIL] ") << line.name << ": " << line.detail << "\n";
}

int run_verify() {
    verify::VerifyReport r = verify::run_all();
    print_suite(r.gradients);
    print_suite(r.losses);
    print_suite(r.shapes);
    std::cout << (r.model.pass ? "[PASS] " : "[FAIL] ") << "model_end_to_end: max_rel_err=" << r.model.max_rel_err
              << " over " << r.model.checked << " sampled elements\n";
    std::cout << (r.all_pass ? "verification passed" : "verification FAILED") << "\n";
    return r.all_pass ? 0 : kExitNumeric;
}

int dispatch_dtype(const config::RunConfig& cfg, const std::function<int()>& f32, const std::function<int()>& f64) {
    return cfg.dtype == "float64" ? f64() : f32();
}

std::uint32_t checkpoint_dtype(const std::string& path) {
    return ckpt::Reader(path).dtype_bytes();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Identity-aware U-Net: synthesis, training, cross-validation, evaluation and self-verification"};
    app.require_subcommand(1);

    CommonArgs synth_args, train_args, cv_args, eval_args, predict_args;

    // synth
    auto* synth = app.add_subcommand("synth", "generate the synthetic elliptical-cell benchmark");
    std::string synth_out;
    int synth_num = -1;
    add_common(synth, synth_args);
    synth->add_option("--out", synth_out, "output dataset directory")->required();
    synth->add_option("--num", synth_num, "number of images (overrides synth.num_images)");

    // train
    auto* tr = app.add_subcommand("train", "train on a manifest (use --set loss.lambda=0 for the plain U-Net baseline)");
    std::string tr_manifest, tr_pool, tr_out = "runs/train", tr_resume;
    double tr_lambda = -1.0;
    add_common(tr, train_args);
    tr->add_option("--manifest", tr_manifest, "dataset manifest JSON")->required();
    tr->add_option("--pool", tr_pool, "hard-negative pool manifest");
    tr->add_option("--out", tr_out, "output directory (log + checkpoints)");
    tr->add_option("--lambda", tr_lambda, "triplet weight (overrides loss.lambda)");
    tr->add_option("--resume", tr_resume, "checkpoint to resume from");

    // cv
    auto* cv = app.add_subcommand("cv", "k-fold cross-validation");
    std::string cv_manifest, cv_pool, cv_out = "runs/cv";
    int cv_k = 10;
    add_common(cv, cv_args);
    cv->add_option("--manifest", cv_manifest, "dataset manifest JSON")->required();
    cv->add_option("--pool", cv_pool, "hard-negative pool manifest");
    cv->add_option("--k", cv_k, "fold count");
    cv->add_option("--out", cv_out, "output directory");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
    std::string ev_ckpt, ev_manifest, ev_out = "runs/eval";
    add_common(ev, eval_args);
    ev->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required();
    ev->add_option("--manifest", ev_manifest, "dataset manifest JSON")->required();
    ev->add_option("--out", ev_out, "output directory (report, table, overlays)");
    double ev_threshold = -1.0;
    ev->add_option("--threshold", ev_threshold, "foreground threshold (overrides eval.threshold)");

    // predict
    auto* pr = app.add_subcommand("predict", "predict a mask for one image");
    std::string pr_ckpt, pr_image, pr_out = "prediction.png";
    double pr_threshold = -1.0;
    add_common(pr, predict_args);
    pr->add_option("--checkpoint", pr_ckpt, "model checkpoint")->required();
    pr->add_option("--image", pr_image, "input image")->required();
    pr->add_option("--out", pr_out, "output mask PNG");
    pr->add_option("--threshold", pr_threshold, "foreground threshold");

    // verify
    app.add_subcommand("verify", "run the 64-bit gradient, loss-oracle and shape suites");

    // schema
    auto* schema = app.add_subcommand("config-schema", "print the JSON schema of the flat config");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (app.got_subcommand(synth)) {
            config::RunConfig cfg = build_config(synth_args);
            if (synth_num >= 0) cfg.synth.num_images = synth_num;
            if (cfg.synth.num_images < 1) throw UsageError("synth: --num must be positive");
            data::generate_synthetic(cfg.synth, synth_out);
            std::cout << "wrote " << cfg.synth.num_images << " images under " << synth_out << "\n";
            return 0;
        }
        if (app.got_subcommand(tr)) {
            config::RunConfig cfg = build_config(train_args);
            if (tr_lambda >= 0) cfg.train.loss.lambda = tr_lambda;
            return dispatch_dtype(
                cfg, [&] { return run_train<float>(cfg, tr_manifest, tr_pool, tr_out, tr_resume); },
                [&] { return run_train<double>(cfg, tr_manifest, tr_pool, tr_out, tr_resume); });
        }
        if (app.got_subcommand(cv)) {
            config::RunConfig cfg = build_config(cv_args);
            return dispatch_dtype(cfg, [&] { return run_cv<float>(cfg, cv_manifest, cv_pool, cv_k, cv_out); },
                                  [&] { return run_cv<double>(cfg, cv_manifest, cv_pool, cv_k, cv_out); });
        }
        if (app.got_subcommand(ev)) {
            config::RunConfig cfg = build_config(eval_args);
            if (ev_threshold >= 0) cfg.eval_threshold = ev_threshold;
            return checkpoint_dtype(ev_ckpt) == 8 ? run_eval<double>(cfg, ev_ckpt, ev_manifest, ev_out)
                                                  : run_eval<float>(cfg, ev_ckpt, ev_manifest, ev_out);
        }
        if (app.got_subcommand(pr)) {
            config::RunConfig cfg = build_config(predict_args);
            const double threshold = pr_threshold >= 0 ? pr_threshold : cfg.eval_threshold;
            return checkpoint_dtype(pr_ckpt) == 8
                       ? run_predict<double>(cfg, pr_ckpt, pr_image, pr_out, threshold)
                       : run_predict<float>(cfg, pr_ckpt, pr_image, pr_out, threshold);
        }
        if (app.got_subcommand(schema)) {
            std::cout << config::RunConfig::schema().dump(1) << "\n";
            return 0;
        }
        return run_verify();
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
}
