#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <future>
#include <iostream>

#include "evigrid/render.hpp"
#include "evigrid/sim.hpp"

namespace evigrid {

namespace detail {

inline void parallel_sequences(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::future<void>> futs;
    std::atomic<std::size_t> next{0};
    const int workers = std::min<std::size_t>(threads, n);
    for (int w = 0; w < workers; ++w) {
        futs.push_back(std::async(std::launch::async, [&] {
            for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
        }));
    }
    for (auto& f : futs) f.get();  // rethrows
}

inline nlohmann::json load_manifest(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw IoError("cannot open manifest: " + (dir / "manifest.json").string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError("malformed manifest " + (dir / "manifest.json").string() + ": " +
                          e.what());
    }
}

inline void store_manifest(const std::filesystem::path& dir, const nlohmann::json& j) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    if (!out) throw IoError("cannot write manifest: " + (dir / "manifest.json").string());
    out << j.dump(2) << "\n";
    if (!out.flush()) throw IoError("manifest write failed");
}

inline RepresentationConfig repr_config_from_manifest(const nlohmann::json& m) {
    RepresentationConfig cfg;
    const auto& grid = m.at("grid");
    cfg.grid = {grid.at("width"), grid.at("height"), grid.at("resolution")};
    cfg.frame_dt = m.at("frame_dt");
    cfg.rgm_offset = m.value("rgm_offset", 5);
    cfg.ground_z_threshold = m.value("ground_z_threshold", 0.2);
    cfg.measurement.alpha_occ = m.value("alpha_occ", 0.9);
    cfg.measurement.alpha_free = m.value("alpha_free", 0.7);
    if (!cfg.valid()) throw FormatError("invalid representation config in manifest");
    return cfg;
}

inline nlohmann::json repr_config_to_manifest(const RepresentationConfig& cfg) {
    return {{"grid",
             {{"width", cfg.grid.width},
              {"height", cfg.grid.height},
              {"resolution", cfg.grid.resolution}}},
            {"frame_dt", cfg.frame_dt},
            {"rgm_offset", cfg.rgm_offset},
            {"ground_z_threshold", cfg.ground_z_threshold},
            {"alpha_occ", cfg.measurement.alpha_occ},
            {"alpha_free", cfg.measurement.alpha_free}};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// gen

struct GenOptions {
    std::optional<std::filesystem::path> world_spec;  // JSON WorldSpec
    bool use_standard_suite{false};
    std::uint64_t seed{0};
    int frames{kSuiteFrames};
    RepresentationConfig repr;
};

/// Writes a dataset directory from a world spec or the standard suite.
/// Returns (sequences, frames-per-sequence).
inline std::pair<int, int> run_gen(const GenOptions& opt, const std::filesystem::path& out_dir) {
    Dataset ds;
    if (opt.use_standard_suite) {
        ds = standard_suite(opt.seed, opt.repr);
    } else if (opt.world_spec) {
        std::ifstream in(*opt.world_spec);
        if (!in) throw IoError("cannot open world spec: " + opt.world_spec->string());
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
            throw FormatError("malformed world spec " + opt.world_spec->string() + ": " +
                              e.what());
        }
        WorldSpec spec = world_spec_from_json(j);
        if (opt.seed != 0) spec.seed = opt.seed;
        ds.config = opt.repr;
        ds.seed = spec.seed;
        ds.world_hash = world_spec_hash(spec);
        Sequence seq;
        seq.name = "seq_000";
        seq.frames = simulate(spec, opt.frames, opt.repr.frame_dt, opt.repr);
        ds.sequences.push_back(std::move(seq));
    } else {
        throw InvalidSpec("gen: need a world spec or --standard-suite");
    }
    write_dataset(ds, out_dir);
    const int frames = ds.sequences.empty() ? 0 : static_cast<int>(ds.sequences[0].frames.size());
    return {static_cast<int>(ds.sequences.size()), frames};
}

// ---------------------------------------------------------------------------
// repr

/// Builds SGM, RGM and eOGM files for every frame of a dataset. RGMs for
/// the first rgm_offset frames are computed against frame 0 and flagged.
inline void run_repr(const std::filesystem::path& dataset_dir,
                     const std::filesystem::path& out_dir, int threads = 1) {
    const Dataset ds = read_dataset(dataset_dir);
    if (ds.sequences.empty()) throw EmptyDataset("repr: dataset has no sequences");
    const RepresentationConfig& cfg = ds.config;

    std::vector<nlohmann::json> seq_entries(ds.sequences.size());
    detail::parallel_sequences(ds.sequences.size(), threads, [&](std::size_t s) {
        const Sequence& seq = ds.sequences[s];
        std::error_code ec;
        std::filesystem::create_directories(out_dir / seq.name, ec);
        if (ec) throw IoError("cannot create " + (out_dir / seq.name).string());

        std::vector<Sgm> sgms;
        sgms.reserve(seq.frames.size());
        nlohmann::json frames = nlohmann::json::array();
        Eogm prior(cfg.grid, BeliefMass::vacuous());

        for (std::size_t f = 0; f < seq.frames.size(); ++f) {
            const Frame& frame = seq.frames[f];
            const PointCloud filtered = remove_ground(frame.cloud, cfg.ground_z_threshold);
            Sgm sgm = build_sgm(filtered, cfg);
            sgms.push_back(sgm);

            const std::size_t past_idx = f >= static_cast<std::size_t>(cfg.rgm_offset)
                                             ? f - cfg.rgm_offset
                                             : 0;
            const bool flagged = f < static_cast<std::size_t>(cfg.rgm_offset);
            const Sgm past =
                transform_grid(sgms[past_idx], sgms[past_idx].pose, sgm.pose);
            const Rgm rgm = build_rgm(sgm, past);

            if (f == 0) {
                prior.pose = sgm.pose;
                prior.timestamp = sgm.timestamp;
            } else {
                prior = warp_grid(prior, prior.pose, sgm.pose, BeliefMass::vacuous());
            }
            prior = update_eogm(prior, sgm_to_measurement(sgm, cfg.measurement));

            char stem[32];
            std::snprintf(stem, sizeof(stem), "frame_%03zu", f);
            const std::string sgm_rel = seq.name + "/" + stem + ".sgm.egrd";
            const std::string rgm_rel = seq.name + "/" + stem + ".rgm.egrd";
            const std::string eogm_rel = seq.name + "/" + stem + ".eogm.egrd";
            write_egrd(out_dir / sgm_rel, sgm);
            write_egrd(out_dir / rgm_rel, rgm);
            write_egrd(out_dir / eogm_rel, prior);
            frames.push_back({{"sgm", sgm_rel},
                              {"rgm", rgm_rel},
                              {"eogm", eogm_rel},
                              {"timestamp", frame.timestamp},
                              {"rgm_flagged", flagged}});
        }
        seq_entries[s] = {{"name", seq.name},
                          {"control", seq.is_static_control},
                          {"frames", std::move(frames)}};
    });

    nlohmann::json manifest = detail::repr_config_to_manifest(cfg);
    manifest["version"] = 1;
    manifest["dataset"] = dataset_dir.string();
    manifest["sequences"] = seq_entries;
    detail::store_manifest(out_dir, manifest);
}

// ---------------------------------------------------------------------------
// segment

struct SegmentOptions {
    enum class Mode { Heuristic, Learned } mode{Mode::Heuristic};
    std::optional<std::filesystem::path> model_path;
    HeuristicParams heuristic;
    double threshold{0.5};
};

struct SequenceIou {
    std::string name;
    IouResult iou;
    bool has_truth{false};
};

/// Segments every frame of a representation directory into dynamic
/// masks. Returns the per-sequence IoU table (micro-averaged over
/// frames) when ground-truth labels are reachable.
inline std::vector<SequenceIou> run_segment(const std::filesystem::path& repr_dir,
                                            const std::filesystem::path& out_dir,
                                            const SegmentOptions& opt, int threads = 1) {
    const nlohmann::json manifest = detail::load_manifest(repr_dir);
    SegModel model;
    if (opt.mode == SegmentOptions::Mode::Learned) {
        if (!opt.model_path) throw InvalidSpec("segment: learned mode requires a model file");
        model = read_eseg(*opt.model_path);
    }

    std::optional<Dataset> truth;
    if (manifest.contains("dataset")) {
        try {
            truth = read_dataset(manifest["dataset"].get<std::string>());
        } catch (const std::exception&) {
            truth.reset();  // labels unavailable; masks are still written
        }
    }

    const auto& sequences = manifest.at("sequences");
    std::vector<SequenceIou> table(sequences.size());
    std::vector<nlohmann::json> seq_entries(sequences.size());

    detail::parallel_sequences(sequences.size(), threads, [&](std::size_t s) {
        const auto& jseq = sequences.at(s);
        const std::string name = jseq.at("name");
        std::error_code ec;
        std::filesystem::create_directories(out_dir / name, ec);
        if (ec) throw IoError("cannot create " + (out_dir / name).string());

        std::size_t dyn_i = 0, dyn_u = 0, stat_i = 0, stat_u = 0;
        nlohmann::json frames = nlohmann::json::array();
        const auto& jframes = jseq.at("frames");
        for (std::size_t f = 0; f < jframes.size(); ++f) {
            const Sgm sgm = read_egrd_sgm(repr_dir / jframes.at(f).at("sgm").get<std::string>());
            const Rgm rgm = read_egrd_rgm(repr_dir / jframes.at(f).at("rgm").get<std::string>());
            DynamicMask mask = opt.mode == SegmentOptions::Mode::Heuristic
                                   ? segment_heuristic(sgm, rgm, opt.heuristic)
                                   : segment_learned(model, sgm, rgm, opt.threshold);
            char stem[32];
            std::snprintf(stem, sizeof(stem), "frame_%03zu", f);
            const std::string mask_rel = name + "/" + stem + ".mask.egrd";
            write_egrd(out_dir / mask_rel, mask);
            frames.push_back({{"mask", mask_rel}, {"timestamp", jframes.at(f).at("timestamp")}});

            if (truth && s < truth->sequences.size() &&
                f < truth->sequences[s].frames.size()) {
                const DynamicMask& gt = truth->sequences[s].frames[f].gt_mask;
                require_same_dims(mask, gt, "segment");
                for (std::size_t i = 0; i < mask.size(); ++i) {
                    const bool p = mask.cells[i] != 0, t = gt.cells[i] != 0;
                    dyn_i += p && t;
                    dyn_u += p || t;
                    stat_i += !p && !t;
                    stat_u += !p || !t;
                }
            }
        }
        seq_entries[s] = {{"name", name}, {"frames", std::move(frames)}};

        table[s].name = name;
        if (truth && dyn_u + stat_u > 0) {
            table[s].has_truth = true;
            table[s].iou.dynamic = dyn_u ? static_cast<double>(dyn_i) / dyn_u : 1.0;
            table[s].iou.statics = stat_u ? static_cast<double>(stat_i) / stat_u : 1.0;
            table[s].iou.mean = 0.5 * (table[s].iou.dynamic + table[s].iou.statics);
        }
    });

    nlohmann::json out_manifest;
    out_manifest["version"] = 1;
    out_manifest["repr"] = repr_dir.string();
    out_manifest["mode"] =
        opt.mode == SegmentOptions::Mode::Heuristic ? "heuristic" : "learned";
    out_manifest["sequences"] = seq_entries;
    detail::store_manifest(out_dir, out_manifest);
    return table;
}

// ---------------------------------------------------------------------------
// train-seg

/// Trains the logistic segmenter on a representation directory with
/// ground-truth labels and writes the model file.
inline SegModel run_train_seg(const std::filesystem::path& repr_dir,
                              const std::filesystem::path& model_out,
                              const SegTrainConfig& cfg, int k = 5,
                              std::ostream* log = nullptr) {
    const nlohmann::json manifest = detail::load_manifest(repr_dir);
    if (!manifest.contains("dataset"))
        throw EmptyDataset("train-seg: representation directory has no dataset link");
    const Dataset truth = read_dataset(manifest["dataset"].get<std::string>());

    std::vector<std::tuple<Sgm, Rgm, DynamicMask>> samples;
    const auto& sequences = manifest.at("sequences");
    for (std::size_t s = 0; s < sequences.size() && s < truth.sequences.size(); ++s) {
        const auto& jframes = sequences.at(s).at("frames");
        for (std::size_t f = 0; f < jframes.size() && f < truth.sequences[s].frames.size();
             ++f) {
            samples.emplace_back(
                read_egrd_sgm(repr_dir / jframes.at(f).at("sgm").get<std::string>()),
                read_egrd_rgm(repr_dir / jframes.at(f).at("rgm").get<std::string>()),
                truth.sequences[s].frames[f].gt_mask);
        }
    }
    if (samples.empty()) throw EmptyDataset("train-seg: no labeled frames");
    if (log) *log << "training on " << samples.size() << " labeled frames\n";
    SegModel model = train(samples, cfg, k);
    write_eseg(model_out, model);
    return model;
}

// ---------------------------------------------------------------------------
// predict

struct PredictOptions {
    PredictorConfig predictor;
    bool persistence{false};
};

struct PredictStats {
    double mean_latency_ms{0.0};
    int sequences{0};
};

/// Runs the predictor over every sequence: consumes the first
/// past_frames frames plus their masks and writes horizon-many predicted
/// occupancy grids per sequence.
inline PredictStats run_predict(const std::filesystem::path& repr_dir,
                                const std::filesystem::path& masks_dir,
                                const std::filesystem::path& out_dir,
                                const PredictOptions& opt, int threads = 1) {
    const nlohmann::json repr_manifest = detail::load_manifest(repr_dir);
    const nlohmann::json masks_manifest = detail::load_manifest(masks_dir);
    const auto& rseqs = repr_manifest.at("sequences");
    const auto& mseqs = masks_manifest.at("sequences");
    if (rseqs.size() != mseqs.size())
        throw AlignmentError("predict: representation and mask sequence counts differ");

    const int past = opt.predictor.sequence.past_frames;
    const int horizon = opt.predictor.sequence.horizon;
    std::vector<nlohmann::json> seq_entries(rseqs.size());
    std::vector<double> latencies(rseqs.size(), 0.0);

    detail::parallel_sequences(rseqs.size(), threads, [&](std::size_t s) {
        const auto& jframes = rseqs.at(s).at("frames");
        const auto& jmasks = mseqs.at(s).at("frames");
        const std::string name = rseqs.at(s).at("name");
        if (static_cast<int>(jframes.size()) < past)
            throw AlignmentError("predict: sequence " + name + " shorter than past_frames");
        if (jmasks.size() != jframes.size())
            throw AlignmentError("predict: masks misaligned for sequence " + name);

        PredictionInput input;
        for (int f = 0; f < past; ++f) {
            input.history.push_back(
                read_egrd_eogm(repr_dir / jframes.at(f).at("eogm").get<std::string>()));
            input.masks.push_back(
                read_egrd_mask(masks_dir / jmasks.at(f).at("mask").get<std::string>()));
        }
        for (int f = past; f < past + horizon && f < static_cast<int>(jframes.size()); ++f) {
            // Future ego poses come from the frame headers.
            const Sgm sgm =
                read_egrd_sgm(repr_dir / jframes.at(f).at("sgm").get<std::string>());
            input.future_poses.push_back(sgm.pose);
        }
        if (static_cast<int>(input.future_poses.size()) != horizon)
            input.future_poses.clear();  // fall back to constant-velocity ego

        const auto t0 = std::chrono::steady_clock::now();
        const std::vector<Ogm> preds = opt.persistence
                                           ? persistence_baseline(input, opt.predictor)
                                           : predict(input, opt.predictor);
        const auto t1 = std::chrono::steady_clock::now();
        latencies[s] = std::chrono::duration<double, std::milli>(t1 - t0).count();

        std::error_code ec;
        std::filesystem::create_directories(out_dir / name, ec);
        if (ec) throw IoError("cannot create " + (out_dir / name).string());
        nlohmann::json steps = nlohmann::json::array();
        for (std::size_t i = 0; i < preds.size(); ++i) {
            char stem[32];
            std::snprintf(stem, sizeof(stem), "step_%02zu", i + 1);
            const std::string rel = name + "/" + stem + ".ogm.egrd";
            write_egrd(out_dir / rel, preds[i]);
            steps.push_back({{"ogm", rel},
                             {"timestamp", preds[i].timestamp},
                             {"pose", {preds[i].pose.x, preds[i].pose.y, preds[i].pose.heading}}});
        }
        seq_entries[s] = {{"name", name}, {"steps", std::move(steps)}};
    });

    nlohmann::json manifest;
    manifest["version"] = 1;
    manifest["repr"] = repr_dir.string();
    manifest["masks"] = masks_dir.string();
    manifest["baseline"] = opt.persistence ? "persistence" : "double-prong";
    manifest["past_frames"] = past;
    manifest["horizon"] = horizon;
    manifest["frame_dt"] = opt.predictor.sequence.frame_dt;
    manifest["sequences"] = seq_entries;
    detail::store_manifest(out_dir, manifest);

    PredictStats stats;
    stats.sequences = static_cast<int>(rseqs.size());
    for (double l : latencies) stats.mean_latency_ms += l;
    if (!latencies.empty()) stats.mean_latency_ms /= static_cast<double>(latencies.size());
    return stats;
}

// ---------------------------------------------------------------------------
// eval

/// Scores a prediction directory against dataset ground truth. Targets
/// for step i are the evidential measurements of the ground-truth SGM at
/// frame past_frames + i; mask IoU compares the predictor's input masks
/// with the labels.
inline MetricReport run_eval(const std::filesystem::path& pred_dir,
                             const std::filesystem::path& dataset_dir) {
    const nlohmann::json pred_manifest = detail::load_manifest(pred_dir);
    const Dataset ds = read_dataset(dataset_dir);
    const int past = pred_manifest.at("past_frames");
    const int horizon = pred_manifest.at("horizon");
    const auto& pseqs = pred_manifest.at("sequences");
    if (pseqs.size() != ds.sequences.size())
        throw AlignmentError("eval: sequence counts differ");

    std::vector<EvalSample> samples;
    std::vector<std::pair<DynamicMask, DynamicMask>> mask_pairs;

    std::optional<std::filesystem::path> masks_dir;
    std::optional<nlohmann::json> masks_manifest;
    if (pred_manifest.contains("masks")) {
        masks_dir = std::filesystem::path(pred_manifest["masks"].get<std::string>());
        try {
            masks_manifest = detail::load_manifest(*masks_dir);
        } catch (const std::exception&) {
            masks_manifest.reset();
        }
    }

    for (std::size_t s = 0; s < pseqs.size(); ++s) {
        const auto& steps = pseqs.at(s).at("steps");
        if (static_cast<int>(steps.size()) != horizon)
            throw AlignmentError("eval: step count differs from horizon");
        if (static_cast<int>(ds.sequences[s].frames.size()) < past + horizon)
            throw AlignmentError("eval: ground-truth sequence too short");

        EvalSample sample;
        for (int i = 0; i < horizon; ++i) {
            sample.predicted.push_back(
                read_egrd_ogm(pred_dir / steps.at(i).at("ogm").get<std::string>()));
            const Frame& gt = ds.sequences[s].frames[past + i];
            sample.target.push_back(sgm_to_measurement(gt.gt_sgm, ds.config.measurement));
            sample.target_masks.push_back(gt.gt_mask);
        }
        samples.push_back(std::move(sample));

        if (masks_manifest) {
            const auto& mframes = masks_manifest->at("sequences").at(s).at("frames");
            for (std::size_t f = 0; f < mframes.size() && f < ds.sequences[s].frames.size();
                 ++f) {
                mask_pairs.emplace_back(
                    read_egrd_mask(*masks_dir / mframes.at(f).at("mask").get<std::string>()),
                    ds.sequences[s].frames[f].gt_mask);
            }
        }
    }
    return evaluate(samples, mask_pairs);
}

// ---------------------------------------------------------------------------
// render

inline void run_render(const std::vector<std::filesystem::path>& files,
                       const std::filesystem::path& out_dir, const std::string& palette) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string());
    for (const auto& file : files) {
        const AnyGrid grid = read_egrd(file);
        const Image img = render_grid(grid, palette);
        write_ppm(out_dir / (file.stem().string() + ".ppm"), img);
    }
}

}  // namespace evigrid
