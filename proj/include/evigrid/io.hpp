#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <variant>

#include <json.hpp>

#include "evigrid/evaluation.hpp"
#include "evigrid/segmentation.hpp"

namespace evigrid {

// EGRD payload kinds.
enum class GridPayload : std::uint8_t {
    Classes = 1,      // CellClass as u8
    Binary = 2,       // u8 0/1 (residual grids, dynamic masks)
    Belief = 3,       // two little-endian f32 per cell: m_o, m_f
    Probability = 4,  // one little-endian f32 per cell
};

namespace detail {

class ByteWriter {
public:
    explicit ByteWriter(const std::filesystem::path& path)
        : out_(path, std::ios::binary | std::ios::trunc) {
        if (!out_) throw IoError("cannot open for writing: " + path.string());
        path_ = path;
    }

    template <class T>
    void put(T v) {
        static_assert(std::is_trivially_copyable_v<T>);
        out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
    }

    void finish() {
        out_.flush();
        if (!out_) throw IoError("write failed: " + path_.string());
    }

private:
    std::ofstream out_;
    std::filesystem::path path_;
};

class ByteReader {
public:
    explicit ByteReader(const std::filesystem::path& path)
        : in_(path, std::ios::binary), path_(path) {
        if (!in_) throw IoError("cannot open for reading: " + path.string());
    }

    template <class T>
    T get() {
        static_assert(std::is_trivially_copyable_v<T>);
        T v;
        in_.read(reinterpret_cast<char*>(&v), sizeof(T));
        if (!in_)
            throw FormatError("truncated file at byte offset " + std::to_string(offset_) +
                              ": " + path_.string());
        offset_ += sizeof(T);
        return v;
    }

    std::size_t offset() const { return offset_; }
    const std::filesystem::path& path() const { return path_; }

    void fail(const std::string& why) const {
        throw FormatError(why + " at byte offset " + std::to_string(offset_) + ": " +
                          path_.string());
    }

private:
    std::ifstream in_;
    std::filesystem::path path_;
    std::size_t offset_{0};
};

struct GridHeader {
    GridPayload kind;
    GridConfig config;
    double timestamp;
    Pose2 pose;
};

inline void write_grid_header(ByteWriter& w, GridPayload kind, const GridConfig& cfg,
                              double timestamp, const Pose2& pose) {
    w.put<char>('E');
    w.put<char>('G');
    w.put<char>('R');
    w.put<char>('D');
    w.put<std::uint8_t>(1);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(kind));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.width));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.height));
    w.put<float>(static_cast<float>(cfg.resolution));
    w.put<double>(timestamp);
    w.put<double>(pose.x);
    w.put<double>(pose.y);
    w.put<double>(pose.heading);
}

inline GridHeader read_grid_header(ByteReader& r) {
    char magic[4];
    for (char& ch : magic) ch = r.get<char>();
    if (std::memcmp(magic, "EGRD", 4) != 0) r.fail("bad EGRD magic");
    const auto version = r.get<std::uint8_t>();
    if (version != 1) r.fail("unsupported EGRD version " + std::to_string(version));
    GridHeader h;
    const auto kind = r.get<std::uint8_t>();
    if (kind < 1 || kind > 4) r.fail("unknown EGRD payload kind " + std::to_string(kind));
    h.kind = static_cast<GridPayload>(kind);
    h.config.width = static_cast<int>(r.get<std::uint32_t>());
    h.config.height = static_cast<int>(r.get<std::uint32_t>());
    h.config.resolution = static_cast<double>(r.get<float>());
    if (!h.config.valid()) r.fail("invalid grid dimensions");
    h.timestamp = r.get<double>();
    const double px = r.get<double>(), py = r.get<double>(), ph = r.get<double>();
    h.pose = Pose2(px, py, ph);
    return h;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// EGRD v1

inline void write_egrd(const std::filesystem::path& path, const Sgm& g) {
    detail::ByteWriter w(path);
    detail::write_grid_header(w, GridPayload::Classes, g.config, g.timestamp, g.pose);
    for (CellClass c : g.cells) w.put<std::uint8_t>(static_cast<std::uint8_t>(c));
    w.finish();
}

template <class Tag>
inline void write_egrd_binary(const std::filesystem::path& path,
                              const GridMap<std::uint8_t, Tag>& g) {
    detail::ByteWriter w(path);
    detail::write_grid_header(w, GridPayload::Binary, g.config, g.timestamp, g.pose);
    for (std::uint8_t c : g.cells) w.put<std::uint8_t>(c ? 1 : 0);
    w.finish();
}

inline void write_egrd(const std::filesystem::path& path, const Rgm& g) {
    write_egrd_binary(path, g);
}
inline void write_egrd(const std::filesystem::path& path, const DynamicMask& g) {
    write_egrd_binary(path, g);
}

inline void write_egrd(const std::filesystem::path& path, const Eogm& g) {
    detail::ByteWriter w(path);
    detail::write_grid_header(w, GridPayload::Belief, g.config, g.timestamp, g.pose);
    for (const BeliefMass& m : g.cells) {
        w.put<float>(static_cast<float>(m.o));
        w.put<float>(static_cast<float>(m.f));
    }
    w.finish();
}

inline void write_egrd(const std::filesystem::path& path, const Ogm& g) {
    detail::ByteWriter w(path);
    detail::write_grid_header(w, GridPayload::Probability, g.config, g.timestamp, g.pose);
    for (double p : g.cells) w.put<float>(static_cast<float>(p));
    w.finish();
}

using AnyGrid = std::variant<Sgm, DynamicMask, Eogm, Ogm>;

inline AnyGrid read_egrd(const std::filesystem::path& path) {
    detail::ByteReader r(path);
    const auto h = detail::read_grid_header(r);
    const std::size_t n = static_cast<std::size_t>(h.config.width) * h.config.height;
    switch (h.kind) {
        case GridPayload::Classes: {
            Sgm g(h.config, CellClass::Occluded);
            for (std::size_t i = 0; i < n; ++i) {
                const auto v = r.get<std::uint8_t>();
                if (v > 2) r.fail("cell class code out of range");
                g.cells[i] = static_cast<CellClass>(v);
            }
            g.pose = h.pose;
            g.timestamp = h.timestamp;
            return g;
        }
        case GridPayload::Binary: {
            DynamicMask g(h.config, 0);
            for (std::size_t i = 0; i < n; ++i) {
                const auto v = r.get<std::uint8_t>();
                if (v > 1) r.fail("binary cell out of range");
                g.cells[i] = v;
            }
            g.pose = h.pose;
            g.timestamp = h.timestamp;
            return g;
        }
        case GridPayload::Belief: {
            Eogm g(h.config);
            for (std::size_t i = 0; i < n; ++i) {
                BeliefMass m;
                m.o = static_cast<double>(r.get<float>());
                m.f = static_cast<double>(r.get<float>());
                m.u = 1.0 - m.o - m.f;
                if (!m.valid(1e-6)) r.fail("belief mass out of range");
                g.cells[i] = m;
            }
            g.pose = h.pose;
            g.timestamp = h.timestamp;
            return g;
        }
        case GridPayload::Probability: {
            Ogm g(h.config, 0.5);
            for (std::size_t i = 0; i < n; ++i) {
                const double p = static_cast<double>(r.get<float>());
                if (p < 0.0 || p > 1.0) r.fail("occupancy probability out of range");
                g.cells[i] = p;
            }
            g.pose = h.pose;
            g.timestamp = h.timestamp;
            return g;
        }
    }
    r.fail("unreachable payload kind");
    throw FormatError("unreachable");
}

template <class G>
inline G read_egrd_as(const std::filesystem::path& path) {
    AnyGrid any = read_egrd(path);
    if (auto* g = std::get_if<G>(&any)) return std::move(*g);
    throw FormatError("unexpected payload kind in " + path.string());
}

inline Sgm read_egrd_sgm(const std::filesystem::path& p) { return read_egrd_as<Sgm>(p); }
inline Eogm read_egrd_eogm(const std::filesystem::path& p) { return read_egrd_as<Eogm>(p); }
inline Ogm read_egrd_ogm(const std::filesystem::path& p) { return read_egrd_as<Ogm>(p); }
inline DynamicMask read_egrd_mask(const std::filesystem::path& p) {
    return read_egrd_as<DynamicMask>(p);
}
inline Rgm read_egrd_rgm(const std::filesystem::path& p) {
    DynamicMask m = read_egrd_as<DynamicMask>(p);
    Rgm r(m.config, 0);
    r.cells = std::move(m.cells);
    r.pose = m.pose;
    r.timestamp = m.timestamp;
    return r;
}

// ---------------------------------------------------------------------------
// EPCD v1 point clouds

inline void write_epcd(const std::filesystem::path& path, const PointCloud& cloud) {
    detail::ByteWriter w(path);
    w.put<char>('E');
    w.put<char>('P');
    w.put<char>('C');
    w.put<char>('D');
    w.put<std::uint8_t>(1);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(cloud.points.size()));
    w.put<double>(cloud.timestamp);
    w.put<double>(cloud.ego_pose.x);
    w.put<double>(cloud.ego_pose.y);
    w.put<double>(cloud.ego_pose.heading);
    for (const auto& p : cloud.points) {
        w.put<float>(static_cast<float>(p.x));
        w.put<float>(static_cast<float>(p.y));
        w.put<float>(static_cast<float>(p.z));
    }
    w.finish();
}

inline PointCloud read_epcd(const std::filesystem::path& path) {
    detail::ByteReader r(path);
    char magic[4];
    for (char& ch : magic) ch = r.get<char>();
    if (std::memcmp(magic, "EPCD", 4) != 0) r.fail("bad EPCD magic");
    const auto version = r.get<std::uint8_t>();
    if (version != 1) r.fail("unsupported EPCD version " + std::to_string(version));
    PointCloud cloud;
    const auto count = r.get<std::uint32_t>();
    cloud.timestamp = r.get<double>();
    const double px = r.get<double>(), py = r.get<double>(), ph = r.get<double>();
    cloud.ego_pose = Pose2(px, py, ph);
    cloud.points.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        Point3 p;
        p.x = static_cast<double>(r.get<float>());
        p.y = static_cast<double>(r.get<float>());
        p.z = static_cast<double>(r.get<float>());
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
            r.fail("non-finite point coordinate");
        cloud.points.push_back(p);
    }
    return cloud;
}

// ---------------------------------------------------------------------------
// ESEG v1 segmentation models

inline void write_eseg(const std::filesystem::path& path, const SegModel& model) {
    if (!model.valid()) throw InvalidSpec("write_eseg: malformed model");
    detail::ByteWriter w(path);
    w.put<char>('E');
    w.put<char>('S');
    w.put<char>('E');
    w.put<char>('G');
    w.put<std::uint8_t>(1);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(model.k));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(model.weights.size()));
    for (double v : model.weights) w.put<double>(v);
    w.finish();
}

inline SegModel read_eseg(const std::filesystem::path& path) {
    detail::ByteReader r(path);
    char magic[4];
    for (char& ch : magic) ch = r.get<char>();
    if (std::memcmp(magic, "ESEG", 4) != 0) r.fail("bad ESEG magic");
    const auto version = r.get<std::uint8_t>();
    if (version != 1) r.fail("unsupported ESEG version " + std::to_string(version));
    SegModel model;
    model.k = static_cast<int>(r.get<std::uint32_t>());
    const auto count = r.get<std::uint32_t>();
    if (count != SegModel::weight_count(model.k)) r.fail("weight count does not match k");
    model.weights.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const double v = r.get<double>();
        if (!std::isfinite(v)) r.fail("non-finite weight");
        model.weights.push_back(v);
    }
    return model;
}

// ---------------------------------------------------------------------------
// Report serialization

inline nlohmann::json report_json(const MetricReport& rep) {
    return nlohmann::json{{"mse_per_step", rep.mse_per_step},
                          {"dynamic_mse_per_step", rep.dynamic_mse_per_step},
                          {"is_per_step", rep.is_per_step},
                          {"mse_avg", rep.mse_avg},
                          {"dynamic_mse_avg", rep.dynamic_mse_avg},
                          {"is_avg", rep.is_avg},
                          {"iou_static", rep.iou_static},
                          {"iou_dynamic", rep.iou_dynamic},
                          {"iou_mean", rep.iou_mean},
                          {"samples", rep.samples}};
}

}  // namespace evigrid
