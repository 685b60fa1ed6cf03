#pragma once

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "error.hpp"
#include "grid.hpp"
#include "rng.hpp"

namespace etch {

// One multi-light acquisition: k-th capture was lit by the k-th source.
struct CaptureStack {
    std::vector<ScalarGrid> captures;
    std::vector<Vec3> lights;          // unit directions toward the source
    std::vector<double> intensities;   // positive per-source scale
    double condition_number = 0.0;     // of the full light matrix
};

namespace detail {

struct Sym3 {
    // symmetric 3x3: [[a, b, c], [b, d, e], [c, e, f]]
    double a = 0, b = 0, c = 0, d = 0, e = 0, f = 0;

    void accumulate(const Vec3& v) {
        a += v.x * v.x;
        b += v.x * v.y;
        c += v.x * v.z;
        d += v.y * v.y;
        e += v.y * v.z;
        f += v.z * v.z;
    }

    double trace() const { return a + d + f; }

    double det() const {
        return a * (d * f - e * e) - b * (b * f - c * e) + c * (b * e - c * d);
    }

    // Cramer solve; the caller checks the determinant first.
    Vec3 solve(const Vec3& rhs, double determinant) const {
        double i00 = d * f - e * e, i01 = c * e - b * f, i02 = b * e - c * d;
        double i11 = a * f - c * c, i12 = b * c - a * e;
        double i22 = a * d - b * b;
        return Vec3{(i00 * rhs.x + i01 * rhs.y + i02 * rhs.z) / determinant,
                    (i01 * rhs.x + i11 * rhs.y + i12 * rhs.z) / determinant,
                    (i02 * rhs.x + i12 * rhs.y + i22 * rhs.z) / determinant};
    }

    // Eigenvalues of a symmetric 3x3, descending, by the trigonometric
    // closed form.
    void eigenvalues(double out[3]) const {
        double p1 = b * b + c * c + e * e;
        if (p1 == 0.0) {
            out[0] = std::max({a, d, f});
            out[2] = std::min({a, d, f});
            out[1] = trace() - out[0] - out[2];
            return;
        }
        double q = trace() / 3.0;
        double p2 = (a - q) * (a - q) + (d - q) * (d - q) + (f - q) * (f - q) + 2.0 * p1;
        double p = std::sqrt(p2 / 6.0);
        Sym3 bm{(a - q) / p, b / p,       c / p,
                (d - q) / p, e / p,       (f - q) / p};
        double r = std::clamp(bm.det() / 2.0, -1.0, 1.0);
        double phi = std::acos(r) / 3.0;
        out[0] = q + 2.0 * p * std::cos(phi);
        out[2] = q + 2.0 * p * std::cos(phi + 2.0 * kPi / 3.0);
        out[1] = 3.0 * q - out[0] - out[2];
    }
};

}  // namespace detail

// Validated assembly. Fails fast on geometry that cannot be solved at all:
// fewer than three sources, or a light matrix without full rank.
inline CaptureStack make_capture_stack(std::vector<ScalarGrid> captures, std::vector<Vec3> lights,
                                       std::vector<double> intensities = {}) {
    if (captures.size() < 3) {
        throw ConfigError("photometric solve needs at least 3 captures, got " +
                          std::to_string(captures.size()));
    }
    if (lights.size() != captures.size()) {
        throw ConfigError("light count does not match capture count");
    }
    if (intensities.empty()) {
        intensities.assign(captures.size(), 1.0);
    }
    if (intensities.size() != captures.size()) {
        throw ConfigError("intensity count does not match capture count");
    }
    int w = captures.front().width(), h = captures.front().height();
    for (const ScalarGrid& c : captures) {
        require_same_dims(c.width(), c.height(), w, h, "capture stack");
        for (double v : c.samples()) {
            if (v < 0.0 || v > 1.0) {
                throw DataError("capture values must lie in [0,1]");
            }
        }
    }
    for (const Vec3& l : lights) {
        if (std::abs(l.norm() - 1.0) > 1e-6) {
            throw ConfigError("light directions must be unit length");
        }
    }
    for (double s : intensities) {
        if (!(s > 0.0) || !std::isfinite(s)) {
            throw ConfigError("light intensities must be positive");
        }
    }

    detail::Sym3 A;
    for (std::size_t k = 0; k < lights.size(); ++k) {
        A.accumulate(lights[k] * intensities[k]);
    }
    double eig[3];
    A.eigenvalues(eig);
    if (!(eig[2] > 1e-12 * std::max(eig[0], 1e-300))) {
        throw ConfigError("light directions are rank deficient (coplanar rig)");
    }
    CaptureStack s;
    s.captures = std::move(captures);
    s.lights = std::move(lights);
    s.intensities = std::move(intensities);
    s.condition_number = std::sqrt(eig[0] / eig[2]);
    return s;
}

struct PsOptions {
    double shadow_floor = 0.01;    // captures darker than this are distrusted
    double highlight_ceil = 0.98;  // and brighter than this
    double albedo_floor = 1e-4;    // below this the normal direction is noise
};

struct PsResult {
    ScalarGrid albedo;
    VectorGrid normals;    // unit, z > 0 where valid; sentinel elsewhere
    BinaryMask validity;
    double condition_number = 0.0;
};

// Per-pixel Lambertian least squares: minimize ||L g - I|| over g, with
// albedo |g| and normal g/|g|. Shadowed and blown captures are dropped
// per pixel when at least three trustworthy ones remain; pixels without
// three lit captures keep their estimate but are flagged invalid.
inline PsResult solve_ps(const CaptureStack& stack, const PsOptions& opt = {}) {
    if (!(opt.shadow_floor >= 0.0) || !(opt.highlight_ceil <= 1.0) ||
        !(opt.shadow_floor < opt.highlight_ceil)) {
        throw ConfigError("invalid shadow/highlight bounds");
    }
    const std::size_t n = stack.captures.size();
    if (n < 3) {
        throw ConfigError("photometric solve needs at least 3 captures");
    }
    const int w = stack.captures.front().width();
    const int h = stack.captures.front().height();

    std::vector<Vec3> rows(n);
    for (std::size_t k = 0; k < n; ++k) {
        rows[k] = stack.lights[k] * stack.intensities[k];
    }
    detail::Sym3 full;
    for (const Vec3& r : rows) {
        full.accumulate(r);
    }
    double full_det = full.det();
    double full_scale = full.trace() / 3.0;
    if (!(full_det > 1e-12 * full_scale * full_scale * full_scale)) {
        throw ConfigError("light directions are rank deficient (coplanar rig)");
    }

    PsResult res;
    res.albedo = ScalarGrid(w, h, 0.0);
    res.normals = VectorGrid(w, h);
    res.validity = BinaryMask(w, h, false);
    res.condition_number = stack.condition_number;

    std::vector<double> I(n);
    std::vector<unsigned char> use(n);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            std::size_t lit = 0;
            for (std::size_t k = 0; k < n; ++k) {
                I[k] = stack.captures[k].at(x, y);
                use[k] = I[k] >= opt.shadow_floor && I[k] <= opt.highlight_ceil;
                lit += use[k];
            }
            bool subset = lit >= 3 && lit < n;
            if (lit < 3) {
                std::fill(use.begin(), use.end(), 1);  // nothing to discard into
            }

            Vec3 g;
            bool solvable;
            if (!subset && lit == n) {
                Vec3 b{};
                for (std::size_t k = 0; k < n; ++k) {
                    b = b + rows[k] * I[k];
                }
                g = full.solve(b, full_det);
                solvable = true;
            } else {
                detail::Sym3 A;
                Vec3 b{};
                for (std::size_t k = 0; k < n; ++k) {
                    if (use[k]) {
                        A.accumulate(rows[k]);
                        b = b + rows[k] * I[k];
                    }
                }
                double det = A.det();
                double scale = A.trace() / 3.0;
                solvable = det > 1e-12 * scale * scale * scale;
                if (solvable) {
                    g = A.solve(b, det);
                }
            }

            double rho = solvable ? g.norm() : 0.0;
            res.albedo.at(x, y) = rho;
            bool valid = lit >= 3 && solvable && rho >= opt.albedo_floor && g.z > 0.0;
            if (valid) {
                res.normals.at(x, y) = Vec3{g.x / rho, g.y / rho, g.z / rho};
                res.validity.set(x, y, true);
            } else {
                res.normals.at(x, y) = Vec3{0.0, 0.0, 1.0};
                res.normals.set_valid(x, y, false);
            }
        }
    }
    for (std::size_t i = 0; i < res.validity.size(); ++i) {
        res.normals.validity()[i] = res.validity.bits()[i];
    }
    return res;
}

// Spectral least-squares integration of a normal field into a height map.
// The gradient field (p,q) = (-nx/nz, -ny/nz) is mirror-extended to twice
// the size (odd in the derivative axis, even in the other) which makes the
// periodic solve behave like a Neumann problem, then each Fourier mode of
// the height follows from  z_hat = -i (wx p_hat + wy q_hat) / (wx^2 + wy^2).
// Invalid pixels contribute zero gradient. The result is zero-mean over the
// valid region.
inline ScalarGrid integrate_normals(const VectorGrid& normals, const BinaryMask& validity) {
    require_same_dims(normals.width(), normals.height(), validity.width(), validity.height(),
                      "integrate_normals");
    const int w = normals.width(), h = normals.height();
    std::size_t n_valid = validity.count();
    if (n_valid == 0) {
        throw DataError("integrate_normals: no valid pixels");
    }

    ScalarGrid p(w, h, 0.0), q(w, h, 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!validity.get(x, y)) {
                continue;
            }
            const Vec3& nrm = normals.at(x, y);
            if (!(nrm.z > 1e-9)) {
                continue;  // defensive: treated as invalid
            }
            p.at(x, y) = -nrm.x / nrm.z;
            q.at(x, y) = -nrm.y / nrm.z;
        }
    }

    const int W2 = 2 * w, H2 = 2 * h;
    const std::size_t total = static_cast<std::size_t>(W2) * H2;
    std::vector<std::complex<double>> buf(total), spec(total), acc(total);

    auto run_fft = [&](bool odd_in_x, const ScalarGrid& src) {
        for (int y = 0; y < H2; ++y) {
            int ye = y < h ? y : H2 - 1 - y;
            double sy = (y < h || odd_in_x) ? 1.0 : -1.0;
            for (int x = 0; x < W2; ++x) {
                int xe = x < w ? x : W2 - 1 - x;
                double sx = (x < w || !odd_in_x) ? 1.0 : -1.0;
                buf[static_cast<std::size_t>(y) * W2 + x] = sx * sy * src.at(xe, ye);
            }
        }
        fftw_plan plan = fftw_plan_dft_2d(H2, W2, reinterpret_cast<fftw_complex*>(buf.data()),
                                          reinterpret_cast<fftw_complex*>(spec.data()),
                                          FFTW_FORWARD, FFTW_ESTIMATE);
        fftw_execute(plan);
        fftw_destroy_plan(plan);
    };

    // accumulate -i * w_axis * spec / (wx^2 + wy^2) for both axes
    auto accumulate = [&](bool x_axis) {
        for (int v = 0; v < H2; ++v) {
            int sv = v <= H2 / 2 ? v : v - H2;
            double wy = 2.0 * kPi * static_cast<double>(sv) / H2;
            for (int u = 0; u < W2; ++u) {
                int su = u <= W2 / 2 ? u : u - W2;
                double wx = 2.0 * kPi * static_cast<double>(su) / W2;
                double denom = wx * wx + wy * wy;
                if (denom == 0.0) {
                    continue;
                }
                double wa = x_axis ? wx : wy;
                std::size_t i = static_cast<std::size_t>(v) * W2 + u;
                acc[i] += std::complex<double>(0.0, -wa / denom) * spec[i];
            }
        }
    };

    run_fft(true, p);
    accumulate(true);
    run_fft(false, q);
    accumulate(false);

    fftw_plan inv = fftw_plan_dft_2d(H2, W2, reinterpret_cast<fftw_complex*>(acc.data()),
                                     reinterpret_cast<fftw_complex*>(buf.data()), FFTW_BACKWARD,
                                     FFTW_ESTIMATE);
    fftw_execute(inv);
    fftw_destroy_plan(inv);

    ScalarGrid depth(w, h, 0.0);
    double scale = 1.0 / static_cast<double>(total);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            depth.at(x, y) = buf[static_cast<std::size_t>(y) * W2 + x].real() * scale;
        }
    }
    double mean = 0.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (validity.get(x, y)) {
                mean += depth.at(x, y);
            }
        }
    }
    mean /= static_cast<double>(n_valid);
    for (double& v : depth.samples()) {
        v -= mean;
    }
    return depth;
}

// Central-difference normals of a height field, clamped at the borders.
// This is the forward model the renderer uses.
inline VectorGrid normals_from_depth(const ScalarGrid& depth) {
    if (depth.empty()) {
        throw ConfigError("normals_from_depth: empty grid");
    }
    VectorGrid out(depth.width(), depth.height());
    for (int y = 0; y < depth.height(); ++y) {
        for (int x = 0; x < depth.width(); ++x) {
            double dzdx = 0.5 * (depth.at_clamp(x + 1, y) - depth.at_clamp(x - 1, y));
            double dzdy = 0.5 * (depth.at_clamp(x, y + 1) - depth.at_clamp(x, y - 1));
            double norm = std::sqrt(dzdx * dzdx + dzdy * dzdy + 1.0);
            out.at(x, y) = Vec3{-dzdx / norm, -dzdy / norm, 1.0 / norm};
        }
    }
    return out;
}

// Lambertian forward render of a height field under the given rig.
inline CaptureStack render_captures(const ScalarGrid& depth, const ScalarGrid& albedo,
                                    const std::vector<Vec3>& lights,
                                    std::vector<double> intensities = {}) {
    require_same_dims(depth.width(), depth.height(), albedo.width(), albedo.height(),
                      "render_captures");
    for (double v : albedo.samples()) {
        if (v < 0.0 || v > 1.0) {
            throw DataError("albedo must lie in [0,1]");
        }
    }
    VectorGrid normals = normals_from_depth(depth);
    std::vector<ScalarGrid> captures;
    captures.reserve(lights.size());
    if (intensities.empty()) {
        intensities.assign(lights.size(), 1.0);
    }
    if (intensities.size() != lights.size()) {
        throw ConfigError("intensity count does not match light count");
    }
    for (std::size_t k = 0; k < lights.size(); ++k) {
        ScalarGrid img(depth.width(), depth.height());
        for (int y = 0; y < depth.height(); ++y) {
            for (int x = 0; x < depth.width(); ++x) {
                double shade = std::max(normals.at(x, y).dot(lights[k]), 0.0);
                img.at(x, y) = std::clamp(intensities[k] * albedo.at(x, y) * shade, 0.0, 1.0);
            }
        }
        captures.push_back(std::move(img));
    }
    return make_capture_stack(std::move(captures), lights, std::move(intensities));
}

}  // namespace etch
