#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "grid.hpp"

namespace etch {

namespace detail {

// Neighborhood in the usual thinning order, clockwise from north:
//   p9 p2 p3
//   p8  . p4
//   p7 p6 p5
inline void neighbors8(const BinaryMask& m, int x, int y, int p[8]) {
    auto g = [&](int dx, int dy) {
        int nx = x + dx, ny = y + dy;
        if (nx < 0 || ny < 0 || nx >= m.width() || ny >= m.height()) {
            return 0;
        }
        return m.get(nx, ny) ? 1 : 0;
    };
    p[0] = g(0, -1);   // p2
    p[1] = g(1, -1);   // p3
    p[2] = g(1, 0);    // p4
    p[3] = g(1, 1);    // p5
    p[4] = g(0, 1);    // p6
    p[5] = g(-1, 1);   // p7
    p[6] = g(-1, 0);   // p8
    p[7] = g(-1, -1);  // p9
}

inline int transitions(const int p[8]) {
    int a = 0;
    for (int i = 0; i < 8; ++i) {
        if (p[i] == 0 && p[(i + 1) % 8] == 1) {
            ++a;
        }
    }
    return a;
}

inline int popcount8(const int p[8]) {
    int b = 0;
    for (int i = 0; i < 8; ++i) {
        b += p[i];
    }
    return b;
}

}  // namespace detail

// Classic two-subpass thinning to a one pixel wide, 8-connected skeleton,
// followed by a cleanup that dissolves any 2x2 foreground block the main
// iteration can leave behind in staircase configurations.
inline BinaryMask skeletonize(const BinaryMask& in) {
    BinaryMask m = in;
    std::vector<std::pair<int, int>> kill;
    bool changed = true;
    while (changed) {
        changed = false;
        for (int sub = 0; sub < 2; ++sub) {
            kill.clear();
            for (int y = 0; y < m.height(); ++y) {
                for (int x = 0; x < m.width(); ++x) {
                    if (!m.get(x, y)) {
                        continue;
                    }
                    int p[8];
                    detail::neighbors8(m, x, y, p);
                    int b = detail::popcount8(p);
                    if (b < 2 || b > 6 || detail::transitions(p) != 1) {
                        continue;
                    }
                    // p2*p4*p6 and p4*p6*p8 in the first subpass,
                    // p2*p4*p8 and p2*p6*p8 in the second
                    bool c1 = sub == 0 ? (p[0] * p[2] * p[4] == 0) : (p[0] * p[2] * p[6] == 0);
                    bool c2 = sub == 0 ? (p[2] * p[4] * p[6] == 0) : (p[0] * p[4] * p[6] == 0);
                    if (c1 && c2) {
                        kill.emplace_back(x, y);
                    }
                }
            }
            for (auto [x, y] : kill) {
                m.set(x, y, false);
            }
            changed = changed || !kill.empty();
        }
    }

    // 2x2 cleanup: remove one simple pixel (transition count 1) per block
    // until no block remains. Each removal shrinks the foreground.
    bool blocks = true;
    while (blocks) {
        blocks = false;
        for (int y = 0; y + 1 < m.height(); ++y) {
            for (int x = 0; x + 1 < m.width(); ++x) {
                if (!(m.get(x, y) && m.get(x + 1, y) && m.get(x, y + 1) &&
                      m.get(x + 1, y + 1))) {
                    continue;
                }
                blocks = true;
                const int cand[4][2] = {{x, y}, {x + 1, y}, {x, y + 1}, {x + 1, y + 1}};
                int pick = 0;
                for (int i = 0; i < 4; ++i) {
                    int p[8];
                    detail::neighbors8(m, cand[i][0], cand[i][1], p);
                    if (detail::transitions(p) == 1) {
                        pick = i;
                        break;
                    }
                }
                m.set(cand[pick][0], cand[pick][1], false);
            }
        }
    }
    return m;
}

// One scored unit. Ratios are empty when their denominator is zero; callers
// and the aggregator treat that as "undefined", never as zero.
struct MetricsReport {
    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
    std::uint64_t skel_total = 0, skel_hit = 0;

    std::optional<double> precision, recall, p_recall;
    std::optional<double> fm, pfm, iou, dice;

    std::string mode = "single";  // single | micro | macro
    int units = 1;
};

namespace detail {

inline std::optional<double> ratio(std::uint64_t num, std::uint64_t den) {
    if (den == 0) {
        return std::nullopt;
    }
    return static_cast<double>(num) / static_cast<double>(den);
}

inline std::optional<double> harmonic(std::optional<double> a, std::optional<double> b) {
    if (!a || !b || *a + *b == 0.0) {
        return std::nullopt;
    }
    return 2.0 * (*a) * (*b) / (*a + *b);
}

inline void fill_ratios(MetricsReport& r) {
    r.precision = ratio(r.tp, r.tp + r.fp);
    r.recall = ratio(r.tp, r.tp + r.fn);
    r.p_recall = ratio(r.skel_hit, r.skel_total);
    r.fm = harmonic(r.precision, r.recall);
    // pseudo F-measure: recall taken against the skeleton of the reference
    r.pfm = harmonic(r.precision, r.p_recall);
    r.iou = ratio(r.tp, r.tp + r.fp + r.fn);
    r.dice = ratio(2 * r.tp, 2 * r.tp + r.fp + r.fn);
}

}  // namespace detail

// Scores one prediction against one reference annotation. When an evaluation
// mask is given, both rasters are restricted to it before counting, which is
// equivalent to evaluating the masked sub-population only.
inline MetricsReport score(const BinaryMask& pred, const BinaryMask& gt,
                           const BinaryMask* eval_mask = nullptr) {
    require_same_dims(pred.width(), pred.height(), gt.width(), gt.height(), "score");
    if (eval_mask) {
        require_same_dims(pred.width(), pred.height(), eval_mask->width(), eval_mask->height(),
                          "score");
    }
    BinaryMask p = pred, g = gt;
    if (eval_mask) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (!eval_mask->bits()[i]) {
                p.bits()[i] = 0;
                g.bits()[i] = 0;
            }
        }
    }
    BinaryMask skel = skeletonize(g);

    MetricsReport r;
    for (std::size_t i = 0; i < p.size(); ++i) {
        bool in = !eval_mask || eval_mask->bits()[i];
        bool pi = p.bits()[i] != 0;
        bool gi = g.bits()[i] != 0;
        if (pi && gi) {
            ++r.tp;
        } else if (pi && !gi) {
            ++r.fp;
        } else if (!pi && gi) {
            ++r.fn;
        } else if (in) {
            ++r.tn;
        }
        if (skel.bits()[i]) {
            ++r.skel_total;
            if (pi) {
                ++r.skel_hit;
            }
        }
    }
    detail::fill_ratios(r);
    return r;
}

enum class Aggregate { micro, macro };

// micro: pool raw counts, recompute every ratio once. macro: average each
// ratio over the units where it is defined; pooled counts still reported.
inline MetricsReport aggregate(const std::vector<MetricsReport>& units, Aggregate mode) {
    if (units.empty()) {
        throw ConfigError("aggregate: no units");
    }
    MetricsReport out;
    out.units = 0;
    for (const MetricsReport& u : units) {
        out.tp += u.tp;
        out.fp += u.fp;
        out.fn += u.fn;
        out.tn += u.tn;
        out.skel_total += u.skel_total;
        out.skel_hit += u.skel_hit;
        out.units += u.units;
    }
    if (mode == Aggregate::micro) {
        detail::fill_ratios(out);
        out.mode = "micro";
        return out;
    }
    auto mean_of = [&](std::optional<double> MetricsReport::*field) -> std::optional<double> {
        double sum = 0.0;
        int n = 0;
        for (const MetricsReport& u : units) {
            if (u.*field) {
                sum += *(u.*field);
                ++n;
            }
        }
        if (n == 0) {
            return std::nullopt;
        }
        return sum / n;
    };
    out.precision = mean_of(&MetricsReport::precision);
    out.recall = mean_of(&MetricsReport::recall);
    out.p_recall = mean_of(&MetricsReport::p_recall);
    out.fm = mean_of(&MetricsReport::fm);
    out.pfm = mean_of(&MetricsReport::pfm);
    out.iou = mean_of(&MetricsReport::iou);
    out.dice = mean_of(&MetricsReport::dice);
    out.mode = "macro";
    return out;
}

inline nlohmann::json metrics_to_json(const MetricsReport& r) {
    auto opt = [](const std::optional<double>& v) {
        return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
    };
    return nlohmann::json{
        {"iou", opt(r.iou)},
        {"dice", opt(r.dice)},
        {"fm", opt(r.fm)},
        {"pfm", opt(r.pfm)},
        {"precision", opt(r.precision)},
        {"recall", opt(r.recall)},
        {"p_recall", opt(r.p_recall)},
        {"counts",
         {{"tp", r.tp},
          {"fp", r.fp},
          {"fn", r.fn},
          {"tn", r.tn},
          {"skel_total", r.skel_total},
          {"skel_hit", r.skel_hit}}},
        {"mode", r.mode},
        {"units", r.units},
    };
}

namespace detail {

inline void check_prob_pair(const ScalarGrid& prob, const ScalarGrid& gt, const char* what) {
    require_same_dims(prob.width(), prob.height(), gt.width(), gt.height(), what);
    for (double v : prob.samples()) {
        if (v < 0.0 || v > 1.0) {
            throw DataError(std::string(what) + ": probability outside [0,1]");
        }
    }
    for (double v : gt.samples()) {
        if (v < 0.0 || v > 1.0) {
            throw DataError(std::string(what) + ": reference outside [0,1]");
        }
    }
}

}  // namespace detail

// Mean binary cross entropy; probabilities are clamped away from 0 and 1 so
// a confident wrong pixel costs a large finite amount.
inline double loss_bce(const ScalarGrid& prob, const ScalarGrid& gt) {
    detail::check_prob_pair(prob, gt, "loss_bce");
    const double eps = 1e-7;
    double sum = 0.0;
    for (std::size_t i = 0; i < prob.size(); ++i) {
        double p = prob.samples()[i];
        p = p < eps ? eps : (p > 1.0 - eps ? 1.0 - eps : p);
        double g = gt.samples()[i];
        sum += -(g * std::log(p) + (1.0 - g) * std::log(1.0 - p));
    }
    return sum / static_cast<double>(prob.size());
}

// Focal variant: each term is scaled by (1 - p_t)^gamma. gamma = 0 recovers
// plain cross entropy exactly.
inline double loss_focal(const ScalarGrid& prob, const ScalarGrid& gt, double gamma) {
    detail::check_prob_pair(prob, gt, "loss_focal");
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) {
        throw ConfigError("focal gamma must be non-negative");
    }
    const double eps = 1e-7;
    double sum = 0.0;
    for (std::size_t i = 0; i < prob.size(); ++i) {
        double p = prob.samples()[i];
        p = p < eps ? eps : (p > 1.0 - eps ? 1.0 - eps : p);
        double g = gt.samples()[i];
        sum += -(g * std::pow(1.0 - p, gamma) * std::log(p) +
                 (1.0 - g) * std::pow(p, gamma) * std::log(1.0 - p));
    }
    return sum / static_cast<double>(prob.size());
}

// Smoothed overlap coefficient on soft values; defined even when both inputs
// are all zero (the smoothing term makes it 1).
inline double dice_coefficient(const ScalarGrid& prob, const ScalarGrid& gt, double smooth = 1.0) {
    detail::check_prob_pair(prob, gt, "dice");
    if (!(smooth >= 0.0)) {
        throw ConfigError("dice smoothing must be non-negative");
    }
    double inter = 0.0, psum = 0.0, gsum = 0.0;
    for (std::size_t i = 0; i < prob.size(); ++i) {
        inter += prob.samples()[i] * gt.samples()[i];
        psum += prob.samples()[i];
        gsum += gt.samples()[i];
    }
    return (2.0 * inter + smooth) / (psum + gsum + smooth);
}

inline double loss_dice(const ScalarGrid& prob, const ScalarGrid& gt, double smooth = 1.0) {
    return 1.0 - dice_coefficient(prob, gt, smooth);
}

}  // namespace etch
