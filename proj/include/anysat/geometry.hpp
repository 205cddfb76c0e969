#pragma once

// Tile -> patch -> sub-patch arithmetic and the scale-adaptive positional
// encoding. Everything here is a pure function of integer/real geometry.

#include <cstddef>
#include <vector>

#include "anysat/errors.hpp"

namespace anysat {

struct PatchGrid {
    double tile_m = 0;    // S
    double patch_m = 0;   // P
    size_t per_axis = 0;  // S / P
    size_t total = 0;     // (S / P)^2

    // Row-major, origin top-left.
    size_t pos_x(size_t index) const { return index % per_axis; }
    size_t pos_y(size_t index) const { return index / per_axis; }
    size_t index(size_t px, size_t py) const { return py * per_axis + px; }
};

PatchGrid patch_grid(double tile_m, double patch_m);

struct SubPatchLayout {
    double pixel_m = 0;       // R_m
    size_t requested = 0;     // delta_m, pixels
    size_t effective = 0;     // delta_eff = min(delta_m, P / R_m)
    size_t per_axis = 0;      // (P / R_m) / delta_eff
    size_t pixels_per_side = 0;  // P / R_m

    size_t total() const { return per_axis * per_axis; }
};

SubPatchLayout subpatch_layout(double patch_m, double pixel_m, size_t delta_px);

struct PosEncodingSpec {
    size_t width = 0;     // E, even
    double unit_m = 1.0;  // g: patch side for the combiner, sub-patch side for the encoder
    double ref_m = 1.0;   // G

    PosEncodingSpec(size_t width, double unit_m, double ref_m = 1.0);
};

// mu_x followed by mu_y, each width/2 entries:
//   mu(pos, i) = sin((g/G) * pos / 10000^(i/E) + (pi/2) * (i mod 2))
std::vector<double> pos_encoding(size_t pos_x, size_t pos_y, const PosEncodingSpec& spec);

}  // namespace anysat
