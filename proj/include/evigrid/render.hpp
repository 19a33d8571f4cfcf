#pragma once

#include "evigrid/io.hpp"

namespace evigrid {

struct Rgb {
    std::uint8_t r{0}, g{0}, b{0};
};

struct Image {
    int width{0}, height{0};
    std::vector<Rgb> pixels;  // row-major, row 0 first
};

/// Binary PPM (P6), one pixel per cell. Row 0 of the grid is written
/// first; viewers show it at the top.
inline void write_ppm(const std::filesystem::path& path, const Image& img) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    for (const Rgb& px : img.pixels) {
        out.put(static_cast<char>(px.r));
        out.put(static_cast<char>(px.g));
        out.put(static_cast<char>(px.b));
    }
    if (!out.flush()) throw IoError("write failed: " + path.string());
}

// Sensor grid palette: cyan occupied, yellow free, blue occluded,
// dark red ego cell.
inline Image render_sgm(const Sgm& g) {
    Image img{g.config.width, g.config.height, {}};
    img.pixels.reserve(g.size());
    for (int r = 0; r < g.config.height; ++r) {
        for (int c = 0; c < g.config.width; ++c) {
            switch (g.at(r, c)) {
                case CellClass::Occupied: img.pixels.push_back({0, 255, 255}); break;
                case CellClass::Free: img.pixels.push_back({255, 255, 0}); break;
                case CellClass::Occluded: img.pixels.push_back({0, 0, 255}); break;
            }
        }
    }
    const Cell ego = *world_to_cell({0.0, 0.0}, g.config);
    img.pixels[static_cast<std::size_t>(ego.row) * g.config.width + ego.col] = {139, 0, 0};
    return img;
}

// Occupancy palette: red occupied, green occluded, blue free, using the
// 0.6 / 0.4 probability bands.
inline Image render_ogm(const Ogm& g) {
    Image img{g.config.width, g.config.height, {}};
    img.pixels.reserve(g.size());
    for (double p : g.cells) {
        if (p >= 0.6)
            img.pixels.push_back({255, 0, 0});
        else if (p <= 0.4)
            img.pixels.push_back({0, 0, 255});
        else
            img.pixels.push_back({0, 255, 0});
    }
    return img;
}

// Mask palette: red dynamic, yellow static.
inline Image render_mask(const DynamicMask& g) {
    Image img{g.config.width, g.config.height, {}};
    img.pixels.reserve(g.size());
    for (std::uint8_t v : g.cells)
        img.pixels.push_back(v ? Rgb{255, 0, 0} : Rgb{255, 255, 0});
    return img;
}

/// Renders a grid file with the named palette ("sgm", "ogm", "mask").
/// Throws FormatError when the payload does not fit the palette.
inline Image render_grid(const AnyGrid& grid, const std::string& palette) {
    if (palette == "sgm") {
        if (const auto* g = std::get_if<Sgm>(&grid)) return render_sgm(*g);
        throw FormatError("palette 'sgm' needs a cell-class payload");
    }
    if (palette == "mask") {
        if (const auto* g = std::get_if<DynamicMask>(&grid)) return render_mask(*g);
        throw FormatError("palette 'mask' needs a binary payload");
    }
    if (palette == "ogm") {
        if (const auto* g = std::get_if<Ogm>(&grid)) return render_ogm(*g);
        if (const auto* g = std::get_if<Eogm>(&grid)) return render_ogm(eogm_to_ogm(*g));
        throw FormatError("palette 'ogm' needs a probability or belief payload");
    }
    throw FormatError("unknown palette: " + palette);
}

}  // namespace evigrid
