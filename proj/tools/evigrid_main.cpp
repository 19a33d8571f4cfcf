// Command-line front end for the evidential occupancy pipeline:
// dataset generation, grid representations, segmentation, prediction,
// evaluation, and rendering.

#include <CLI11.hpp>

#include "evigrid/pipeline.hpp"

namespace {

int env_threads() {
    if (const char* v = std::getenv("EVIGRID_THREADS")) {
        const int n = std::atoi(v);
        if (n >= 1) return n;
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    using namespace evigrid;
    CLI::App app{"evigrid: evidential occupancy grids with double-prong prediction"};
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    int threads = env_threads();
    int grid_size = 128;
    double resolution = 0.33;
    bool quiet = false;
    bool json_out = false;
    app.add_option("--seed", seed, "RNG seed");
    app.add_option("--threads", threads, "worker threads (default $EVIGRID_THREADS or 1)");
    app.add_option("--grid-size", grid_size, "grid width and height in cells");
    app.add_option("--resolution", resolution, "cell edge length in meters");
    app.add_flag("--quiet", quiet, "suppress progress output");
    app.add_flag("--json", json_out, "machine-readable output to stdout");

    // gen
    auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
    std::string gen_spec, gen_out;
    bool gen_suite = false;
    int gen_frames = kSuiteFrames;
    gen->add_option("--spec", gen_spec, "world spec JSON file");
    gen->add_flag("--standard-suite", gen_suite, "generate the 30-sequence standard suite");
    gen->add_option("--out", gen_out, "output dataset directory")->required();
    gen->add_option("--frames", gen_frames, "frames per sequence (spec mode)");

    // repr
    auto* repr = app.add_subcommand("repr", "build SGM/RGM/eOGM representations");
    std::string repr_dataset, repr_out;
    repr->add_option("--dataset", repr_dataset, "dataset directory")->required();
    repr->add_option("--out", repr_out, "output directory")->required();

    // segment
    auto* seg = app.add_subcommand("segment", "produce dynamic masks");
    std::string seg_repr, seg_out, seg_mode = "heuristic", seg_model;
    double seg_threshold = 0.5;
    seg->add_option("--repr", seg_repr, "representation directory")->required();
    seg->add_option("--out", seg_out, "output mask directory")->required();
    seg->add_option("--mode", seg_mode, "heuristic or learned")
        ->check(CLI::IsMember({"heuristic", "learned"}));
    seg->add_option("--model", seg_model, "ESEG model file (learned mode)");
    seg->add_option("--threshold", seg_threshold, "decision threshold (learned mode)");

    // train-seg
    auto* train_cmd = app.add_subcommand("train-seg", "train the per-cell segmenter");
    std::string train_repr, train_out;
    SegTrainConfig train_cfg;
    int train_k = 5;
    train_cmd->add_option("--repr", train_repr, "representation directory")->required();
    train_cmd->add_option("--out", train_out, "output model file")->required();
    train_cmd->add_option("--lr", train_cfg.learning_rate, "initial learning rate");
    train_cmd->add_option("--epochs", train_cfg.epochs, "training epochs");
    train_cmd->add_option("--pos-weight", train_cfg.positive_class_weight,
                          "positive class weight (0 = derive from class ratio)");
    train_cmd->add_option("--patch-k", train_k, "patch half-width");

    // predict
    auto* pred = app.add_subcommand("predict", "predict future occupancy");
    std::string pred_repr, pred_masks, pred_out, pred_baseline;
    PredictOptions pred_opt;
    pred->add_option("--repr", pred_repr, "representation directory")->required();
    pred->add_option("--masks", pred_masks, "dynamic mask directory")->required();
    pred->add_option("--out", pred_out, "output prediction directory")->required();
    pred->add_option("--baseline", pred_baseline, "persistence for the single-prong baseline")
        ->check(CLI::IsMember({"persistence"}));
    pred->add_option("--past", pred_opt.predictor.sequence.past_frames, "history frames");
    pred->add_option("--horizon", pred_opt.predictor.sequence.horizon, "prediction steps");
    pred->add_option("--gamma", pred_opt.predictor.static_discount, "static discount per step");
    pred->add_option("--gate", pred_opt.predictor.gate_radius, "track gate radius (m)");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "score predictions against ground truth");
    std::string eval_pred, eval_dataset, eval_report;
    eval_cmd->add_option("--pred", eval_pred, "prediction directory")->required();
    eval_cmd->add_option("--dataset", eval_dataset, "dataset directory")->required();
    eval_cmd->add_option("--report", eval_report, "report JSON output path");

    // render
    auto* render_cmd = app.add_subcommand("render", "render grids to PPM images");
    std::vector<std::string> render_files;
    std::string render_out, render_palette = "sgm";
    render_cmd->add_option("files", render_files, "EGRD files")->required();
    render_cmd->add_option("--out", render_out, "output directory")->required();
    render_cmd->add_option("--palette", render_palette, "sgm, ogm, or mask")
        ->check(CLI::IsMember({"sgm", "ogm", "mask"}));

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            GenOptions opt;
            opt.use_standard_suite = gen_suite;
            if (!gen_spec.empty()) opt.world_spec = gen_spec;
            opt.seed = seed;
            opt.frames = gen_frames;
            opt.repr.grid = {grid_size, grid_size, resolution};
            const auto [seqs, frames] = run_gen(opt, gen_out);
            if (!quiet)
                std::cerr << "wrote " << seqs << " sequences x " << frames << " frames to "
                          << gen_out << "\n";
        } else if (*repr) {
            run_repr(repr_dataset, repr_out, threads);
            if (!quiet) std::cerr << "representations written to " << repr_out << "\n";
        } else if (*seg) {
            SegmentOptions opt;
            opt.mode = seg_mode == "learned" ? SegmentOptions::Mode::Learned
                                             : SegmentOptions::Mode::Heuristic;
            if (!seg_model.empty()) opt.model_path = seg_model;
            opt.threshold = seg_threshold;
            const auto table = run_segment(seg_repr, seg_out, opt, threads);
            if (!quiet) {
                for (const auto& row : table) {
                    if (!row.has_truth) continue;
                    std::cerr << row.name << " iou_static=" << row.iou.statics
                              << " iou_dynamic=" << row.iou.dynamic
                              << " iou_mean=" << row.iou.mean << "\n";
                }
            }
        } else if (*train_cmd) {
            train_cfg.seed = seed;
            run_train_seg(train_repr, train_out, train_cfg, train_k,
                          quiet ? nullptr : &std::cerr);
            if (!quiet) std::cerr << "model written to " << train_out << "\n";
        } else if (*pred) {
            pred_opt.persistence = pred_baseline == "persistence";
            const auto stats = run_predict(pred_repr, pred_masks, pred_out, pred_opt, threads);
            if (!quiet)
                std::cerr << "predicted " << stats.sequences << " sequences, mean latency "
                          << std::fixed << std::setprecision(3) << stats.mean_latency_ms
                          << " ms/frame\n";
        } else if (*eval_cmd) {
            const MetricReport rep = run_eval(eval_pred, eval_dataset);
            const nlohmann::json j = report_json(rep);
            if (!eval_report.empty()) {
                std::ofstream out(eval_report, std::ios::trunc);
                if (!out) throw IoError("cannot write report: " + eval_report);
                out << j.dump(2) << "\n";
            }
            if (json_out)
                std::cout << j.dump(2) << "\n";
            else if (!quiet)
                std::cerr << report_table(rep);
        } else if (*render_cmd) {
            std::vector<std::filesystem::path> files(render_files.begin(), render_files.end());
            run_render(files, render_out, render_palette);
            if (!quiet)
                std::cerr << "rendered " << files.size() << " grids to " << render_out << "\n";
        }
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
