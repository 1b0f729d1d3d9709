#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "edd/rng.hpp"
#include "edd/schema.hpp"
#include "edd/tensor.hpp"

namespace edd {

using Rgb = std::array<float, 3>;

/// Fixed reference colors. The dataset tests that the dominant interior hue of
/// a rendered sign stays closest (L2 in RGB) to its main-color reference, so
/// these values are part of the renderer contract.
inline Rgb palette_color(const std::string& name) {
    if (name == "white") return {0.92f, 0.92f, 0.92f};
    if (name == "red") return {0.80f, 0.10f, 0.12f};
    if (name == "blue") return {0.12f, 0.32f, 0.75f};
    if (name == "yellow") return {0.95f, 0.80f, 0.10f};
    if (name == "black") return {0.08f, 0.08f, 0.09f};
    throw SchemaError("no palette color named '" + name + "'");
}

inline const std::vector<std::string>& palette_names() {
    static const std::vector<std::string> names = {"white", "red", "blue", "yellow", "black"};
    return names;
}

namespace render_detail {

inline float luminance(const Rgb& c) { return 0.299f * c[0] + 0.587f * c[1] + 0.114f * c[2]; }

inline Rgb jitter_color(const Rgb& c, Rng& rng, double amount) {
    Rgb out;
    for (int i = 0; i < 3; ++i) {
        double v = c[i] * (1.0 + rng.uniform(-amount, amount));
        out[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
    return out;
}

enum class ShapeKind { kCircle, kTriangle, kSquare, kOctagon };

inline ShapeKind shape_kind(const std::string& v) {
    if (v == "circle") return ShapeKind::kCircle;
    if (v == "triangle") return ShapeKind::kTriangle;
    if (v == "square") return ShapeKind::kSquare;
    if (v == "octagon") return ShapeKind::kOctagon;
    throw SchemaError("renderer does not know shape value '" + v + "'");
}

/// Point-in-shape test in local sign coordinates (unit circumradius), at a
/// given scale. v grows downward (image rows).
inline bool inside_shape(ShapeKind kind, double u, double v, double s) {
    switch (kind) {
        case ShapeKind::kCircle:
            return u * u + v * v <= s * s;
        case ShapeKind::kSquare: {
            const double a = 0.80 * s;
            return std::abs(u) <= a && std::abs(v) <= a;
        }
        case ShapeKind::kOctagon: {
            const double apothem = 0.9239 * s;
            for (int k = 0; k < 4; ++k) {
                const double ang = (22.5 + 45.0 * k) * 3.14159265358979 / 180.0;
                const double d = std::abs(u * std::cos(ang) + v * std::sin(ang));
                if (d > apothem) return false;
            }
            return true;
        }
        case ShapeKind::kTriangle: {
            // Equilateral, apex up (negative v), centroid at origin.
            const double ax = 0.0, ay = -1.05 * s;
            const double bx = 0.909 * s, by = 0.525 * s;
            const double cx = -0.909 * s, cy = 0.525 * s;
            auto side = [&](double x1, double y1, double x2, double y2) {
                return (x2 - x1) * (v - y1) - (y2 - y1) * (u - x1);
            };
            const double d1 = side(ax, ay, bx, by);
            const double d2 = side(bx, by, cx, cy);
            const double d3 = side(cx, cy, ax, ay);
            const bool neg = (d1 < 0) || (d2 < 0) || (d3 < 0);
            const bool pos = (d1 > 0) || (d2 > 0) || (d3 > 0);
            return !(neg && pos);
        }
    }
    return false;
}

/// Border rings are produced by shrinking the outline; triangles shrink
/// faster near edges, so they get a wider nominal fraction.
inline double border_scale(ShapeKind kind, double frac) {
    double boost = 1.0;
    if (kind == ShapeKind::kTriangle) boost = 1.9;
    if (kind == ShapeKind::kSquare) boost = 1.15;
    return 1.0 - frac * boost;
}

inline double seg_dist(double px, double py, double x1, double y1, double x2, double y2) {
    const double dx = x2 - x1, dy = y2 - y1;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0 ? ((px - x1) * dx + (py - y1) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double qx = x1 + t * dx, qy = y1 + t * dy;
    return std::hypot(px - qx, py - qy);
}

/// Glyph membership in unit interior coordinates.
inline bool inside_glyph(const std::string& symbol, double gu, double gv) {
    if (symbol == "none") return false;
    if (symbol == "bar") return std::abs(gv) <= 0.20 && std::abs(gu) <= 0.62;
    if (symbol == "dot") return gu * gu + gv * gv <= 0.38 * 0.38;
    if (symbol == "cross")
        return seg_dist(gu, gv, -0.46, -0.46, 0.46, 0.46) <= 0.155 ||
               seg_dist(gu, gv, -0.46, 0.46, 0.46, -0.46) <= 0.155;
    if (symbol == "chevron")
        return seg_dist(gu, gv, -0.52, 0.34, 0.0, -0.40) <= 0.155 ||
               seg_dist(gu, gv, 0.0, -0.40, 0.52, 0.34) <= 0.155;
    if (symbol == "digit8") {
        const double d_top = std::hypot(gu, gv + 0.30);
        const double d_bot = std::hypot(gu, gv - 0.32);
        return std::abs(d_top - 0.26) <= 0.115 || std::abs(d_bot - 0.30) <= 0.115;
    }
    if (symbol == "digit0") {
        const double d = std::hypot(gu / 0.52, gv / 0.78);
        return std::abs(d - 0.80) <= 0.26;
    }
    throw SchemaError("renderer does not know symbol value '" + symbol + "'");
}

}  // namespace render_detail

/// Nuisance parameters drawn once per rendered sample.
struct RenderJitter {
    double center_dx, center_dy;   // fraction of image size
    double radius_scale;           // multiplies the nominal 0.36 * size radius
    double rotation;               // radians
    double border_frac;            // ring thickness as a fraction of radius
    double glyph_scale;
    double noise_sigma;
    double channel_gain[3];
    double channel_offset;
};

/// Renders one sign as a [3, size, size] tensor with values in [0, 1].
/// Deterministic given (assignment, seed): every nuisance draw comes from the
/// seeded stream. The assignment gives one value index per schema group; the
/// renderer understands the default taxonomy's group names and value
/// vocabulary and rejects anything else.
inline TensorPtr render_sign(const AttributeSchema& schema, const std::vector<int>& assignment,
                             uint64_t seed, int size = 32) {
    using namespace render_detail;
    if (assignment.size() != schema.group_count())
        throw SchemaError("render_sign: assignment must cover every attribute group");
    for (size_t k = 0; k < assignment.size(); ++k)
        if (assignment[k] < 0 ||
            assignment[k] >= static_cast<int>(schema.groups[k].values.size()))
            throw SchemaError("render_sign: value index out of range for group '" +
                              schema.groups[k].name + "'");

    const std::string main_v = schema.group(schema.group_index("main_color"))
                                   .values[assignment[schema.group_index("main_color")]];
    const std::string border_v = schema.group(schema.group_index("border_color"))
                                     .values[assignment[schema.group_index("border_color")]];
    const std::string shape_v =
        schema.group(schema.group_index("shape")).values[assignment[schema.group_index("shape")]];
    const std::string symbol_v = schema.group(schema.group_index("symbol"))
                                     .values[assignment[schema.group_index("symbol")]];

    const ShapeKind kind = shape_kind(shape_v);
    const bool has_border = border_v != "none";
    if (symbol_v != "none") inside_glyph(symbol_v, 0.0, 0.0);  // vocabulary check up front

    Rng rng(seed);

    // Background: two-color gradient plus optional clutter stripe.
    Rgb bg1, bg2;
    for (int i = 0; i < 3; ++i) bg1[i] = static_cast<float>(rng.uniform(0.10, 0.80));
    for (int i = 0; i < 3; ++i) bg2[i] = static_cast<float>(rng.uniform(0.10, 0.80));
    const double bg_angle = rng.uniform(0.0, 6.28318530717959);
    const bool clutter = rng.uniform() < 0.5;
    const double clut_px = rng.uniform(0.0, 1.0), clut_py = rng.uniform(0.0, 1.0);
    const double clut_angle = rng.uniform(0.0, 3.14159265358979);
    const double clut_width = rng.uniform(0.03, 0.09);
    Rgb clut_color;
    for (int i = 0; i < 3; ++i) clut_color[i] = static_cast<float>(rng.uniform(0.05, 0.65));

    RenderJitter j;
    j.center_dx = rng.uniform(-0.055, 0.055);
    j.center_dy = rng.uniform(-0.055, 0.055);
    j.radius_scale = 1.0 + rng.uniform(-0.13, 0.13);
    j.rotation = rng.uniform(-0.18, 0.18);
    j.border_frac = 0.21 * (1.0 + rng.uniform(-0.25, 0.25));
    j.glyph_scale = 1.0 + rng.uniform(-0.12, 0.12);
    j.noise_sigma = rng.uniform(0.02, 0.08);
    for (int i = 0; i < 3; ++i) j.channel_gain[i] = 1.0 + rng.uniform(-0.10, 0.10);
    j.channel_offset = rng.uniform(-0.04, 0.04);

    const Rgb main_c = jitter_color(palette_color(main_v), rng, 0.10);
    const Rgb border_c = has_border ? jitter_color(palette_color(border_v), rng, 0.10)
                                    : Rgb{0, 0, 0};
    const Rgb glyph_base =
        luminance(main_c) > 0.5f ? palette_color("black") : palette_color("white");
    const Rgb glyph_c = jitter_color(glyph_base, rng, 0.08);

    const double cx = size * (0.5 + j.center_dx);
    const double cy = size * (0.5 + j.center_dy);
    const double radius = size * 0.36 * j.radius_scale;
    const double cos_r = std::cos(-j.rotation), sin_r = std::sin(-j.rotation);
    const double inner_scale = has_border ? border_scale(kind, j.border_frac) : 1.0;
    const double glyph_extent = radius * inner_scale * 0.72 * j.glyph_scale;

    auto img = Tensor::zeros({3, size, size});
    const size_t plane = static_cast<size_t>(size) * size;

    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            double acc[3] = {0, 0, 0};
            // 2x2 supersampling softens the polygon and glyph edges.
            for (int sy = 0; sy < 2; ++sy)
                for (int sx = 0; sx < 2; ++sx) {
                    const double px = x + 0.25 + 0.5 * sx;
                    const double py = y + 0.25 + 0.5 * sy;
                    const double du = px - cx, dv = py - cy;
                    const double u = (du * cos_r - dv * sin_r) / radius;
                    const double v = (du * sin_r + dv * cos_r) / radius;

                    Rgb c;
                    if (inside_shape(kind, u, v, 1.0)) {
                        if (has_border && !inside_shape(kind, u, v, inner_scale)) {
                            c = border_c;
                        } else {
                            const double gu = du / glyph_extent;
                            const double gv = dv / glyph_extent;
                            c = inside_glyph(symbol_v, gu, gv) ? glyph_c : main_c;
                        }
                    } else {
                        const double tx = px / size - 0.5, ty = py / size - 0.5;
                        double t = 0.5 + 0.7 * (tx * std::cos(bg_angle) + ty * std::sin(bg_angle));
                        t = std::clamp(t, 0.0, 1.0);
                        for (int i = 0; i < 3; ++i)
                            c[i] = static_cast<float>(bg1[i] + (bg2[i] - bg1[i]) * t);
                        if (clutter) {
                            const double nx = std::cos(clut_angle), ny = std::sin(clut_angle);
                            const double d = std::abs((px / size - clut_px) * nx +
                                                      (py / size - clut_py) * ny);
                            if (d < clut_width) c = clut_color;
                        }
                    }
                    for (int i = 0; i < 3; ++i) acc[i] += c[i];
                }
            for (int i = 0; i < 3; ++i)
                img->data[i * plane + static_cast<size_t>(y) * size + x] =
                    static_cast<float>(acc[i] / 4.0);
        }
    }

    // Global lighting jitter, then pixel noise.
    for (int i = 0; i < 3; ++i) {
        float* ch = img->data.data() + i * plane;
        for (size_t p = 0; p < plane; ++p)
            ch[p] = static_cast<float>(ch[p] * j.channel_gain[i] + j.channel_offset);
    }
    for (auto& v : img->data) {
        v = static_cast<float>(v + j.noise_sigma * rng.normal());
        v = std::clamp(v, 0.0f, 1.0f);
    }
    return img;
}

}  // namespace edd
