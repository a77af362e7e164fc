#include "waferwise/clean.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "waferwise/error.hpp"
#include "waferwise/io.hpp"
#include "waferwise/learn.hpp"
#include "waferwise/log.hpp"

namespace waferwise::clean {

namespace {

double distance(const Matrix& p, std::size_t a, std::size_t b) {
    double s = 0.0;
    for (std::size_t c = 0; c < p.cols(); ++c) {
        const double d = p(a, c) - p(b, c);
        s += d * d;
    }
    return std::sqrt(s);
}

void check_points(const Matrix& points) {
    if (points.rows() == 0) throw Error("invalid_input", "dbscan: no points");
    if (points.cols() == 0) throw Error("invalid_input", "dbscan: points have no coordinates");
    for (double v : points.data()) {
        if (!std::isfinite(v)) throw Error("invalid_input", "dbscan: non-finite coordinate");
    }
}

/// Neighbors within eps (self included), using the first coordinate to prune.
std::vector<std::vector<std::size_t>> neighborhoods(const Matrix& p, double eps) {
    const std::size_t n = p.rows();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p(a, 0) < p(b, 0); });
    std::vector<std::vector<std::size_t>> out(n);
    for (std::size_t oi = 0; oi < n; ++oi) {
        const std::size_t i = order[oi];
        out[i].push_back(i);
        for (std::size_t oj = oi + 1; oj < n; ++oj) {
            const std::size_t j = order[oj];
            if (p(j, 0) - p(i, 0) > eps) break;
            if (distance(p, i, j) <= eps) {
                out[i].push_back(j);
                out[j].push_back(i);
            }
        }
    }
    return out;
}

bool lex_less(const Matrix& p, std::size_t a, std::size_t b) {
    for (std::size_t c = 0; c < p.cols(); ++c) {
        if (p(a, c) != p(b, c)) return p(a, c) < p(b, c);
    }
    return a < b;
}

}  // namespace

std::vector<int> dbscan(const Matrix& points, const DbscanParams& params) {
    check_points(points);
    if (!(params.eps > 0.0) || !std::isfinite(params.eps)) throw Error("invalid_input", "dbscan: eps must be > 0");
    if (params.min_samples < 2) throw Error("invalid_input", "dbscan: min_samples must be >= 2");

    const std::size_t n = points.rows();
    const auto nbrs = neighborhoods(points, params.eps);
    std::vector<bool> core(n);
    for (std::size_t i = 0; i < n; ++i) core[i] = nbrs[i].size() >= static_cast<std::size_t>(params.min_samples);

    std::vector<int> raw(n, kNoise);
    int next = 0;
    std::vector<std::size_t> queue;
    for (std::size_t s = 0; s < n; ++s) {
        if (!core[s] || raw[s] != kNoise) continue;
        raw[s] = next;
        queue.assign(1, s);
        while (!queue.empty()) {
            const std::size_t i = queue.back();
            queue.pop_back();
            for (std::size_t j : nbrs[i]) {
                if (core[j] && raw[j] == kNoise) {
                    raw[j] = next;
                    queue.push_back(j);
                }
            }
        }
        ++next;
    }

    for (std::size_t i = 0; i < n; ++i) {
        if (core[i]) continue;
        std::size_t best = n;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t j : nbrs[i]) {
            if (!core[j]) continue;
            const double d = distance(points, i, j);
            if (best == n || d < best_d || (d == best_d && lex_less(points, j, best))) {
                best = j;
                best_d = d;
            }
        }
        if (best != n) raw[i] = raw[best];
    }

    // Canonical numbering: clusters ordered by their lowest member index.
    std::vector<int> remap(static_cast<std::size_t>(next), kNoise);
    int label = 0;
    std::vector<int> out(n, kNoise);
    for (std::size_t i = 0; i < n; ++i) {
        if (raw[i] == kNoise) continue;
        auto& m = remap[static_cast<std::size_t>(raw[i])];
        if (m == kNoise) m = label++;
        out[i] = m;
    }
    return out;
}

KneeResult knee_eps(const Matrix& points, int k) {
    check_points(points);
    if (k < 1) throw Error("invalid_input", "knee_eps: k must be >= 1");
    const std::size_t n = points.rows();
    if (n < static_cast<std::size_t>(k) + 1) {
        throw Error("invalid_input", "knee_eps: needs at least k+1 = " + std::to_string(k + 1) + " points, got " +
                                         std::to_string(n));
    }

    KneeResult res;
    res.curve.resize(n);
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) d[j] = distance(points, i, j);
        // The point itself is the first neighbor at distance 0.
        std::nth_element(d.begin(), d.begin() + (k - 1), d.end());
        res.curve[i] = d[static_cast<std::size_t>(k - 1)];
    }
    std::sort(res.curve.begin(), res.curve.end());
    const auto& c = res.curve;

    const double lo = c.front();
    const double hi = c.back();
    if (n < 3 || !(hi > lo)) {
        res.index = n - 1;
        res.eps = hi;
        res.weak_knee = true;
        return res;
    }

    // The knee is the point of the normalized curve lying farthest below its chord. Plain
    // second differences are dominated by the sparse outlier tail, where consecutive
    // distances jump by large amounts.
    std::size_t knee = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = static_cast<double>(i) / static_cast<double>(n - 1);
        const double y = (c[i] - lo) / (hi - lo);
        if (x - y > res.strength) {
            res.strength = x - y;
            knee = i;
        }
    }
    res.index = knee;
    res.eps = c[knee];
    res.weak_knee = res.strength < kWeakKneeStrength;
    return res;
}

std::string_view to_string(ReplacementPolicy policy) {
    return policy == ReplacementPolicy::DieMean ? "die-mean" : "wafer-mean";
}

std::string StructureType::label() const {
    return std::string(to_string(family)) + std::to_string(level) + "-" + std::string(to_string(orientation));
}

std::vector<StructureType> all_structure_types() {
    std::vector<StructureType> out;
    for (Family f : kAllFamilies) {
        for (int level = kMinLevel; level <= kMaxLevel; ++level) {
            for (Orientation o : kAllOrientations) out.push_back({f, level, o});
        }
    }
    return out;
}

CleanResult clean_capacitance(const WaferDataset& wafer, const StructureType& type, const CleanOptions& options) {
    CleanResult result;
    result.records = wafer.capacitance;
    auto& report = result.report;
    report.wafer_id = wafer.wafer_id;
    report.type = type;

    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < wafer.capacitance.size(); ++i) {
        if (type.matches(wafer.capacitance[i].structure)) idx.push_back(i);
    }
    if (idx.empty()) {
        throw Error("invalid_input", "wafer " + wafer.wafer_id + " has no capacitance records for " + type.label());
    }
    report.n_records = idx.size();

    Matrix features(idx.size(), 3);
    for (std::size_t r = 0; r < idx.size(); ++r) {
        const auto& rec = wafer.capacitance[idx[r]];
        features(r, 0) = rec.value_fF;
        features(r, 1) = rec.die.col;
        features(r, 2) = rec.die.row;
    }
    static constexpr const char* kFeatureNames[3] = {"capacitance", "die col", "die row"};
    for (std::size_t c = 0; c < 3; ++c) {
        double s = 1.0;
        if (options.scale) {
            s = (*options.scale)[c];
            if (!(s > 0.0) || !std::isfinite(s)) throw Error("invalid_input", "clean: feature scale must be > 0");
        } else {
            const auto col = features.column(c);
            s = learn::population_std(col);
            if (!(s > 0.0)) {
                s = 1.0;
                report.warnings.push_back(type.label() + ": zero variance in " + kFeatureNames[c] +
                                          "; coordinate left unscaled");
            }
        }
        report.scale[c] = s;
        for (std::size_t r = 0; r < features.rows(); ++r) features(r, c) /= s;
    }
    for (const auto& w : report.warnings) log::warn("wafer " + wafer.wafer_id + ": " + w);

    if (options.eps) {
        report.eps_used = *options.eps;
        report.eps_from_knee = false;
    } else {
        if (features.rows() < static_cast<std::size_t>(options.min_samples) + 1) {
            report.warnings.push_back(type.label() + ": too few records for knee eps; nothing cleaned");
            return result;
        }
        auto knee = knee_eps(features, options.min_samples);
        report.knee_curve = std::move(knee.curve);
        report.weak_knee = knee.weak_knee;
        report.eps_used = knee.eps;
        if (!(report.eps_used > 0.0)) {
            // Duplicated points put the knee on a zero distance; use the smallest positive one.
            const auto pos = std::upper_bound(report.knee_curve.begin(), report.knee_curve.end(), 0.0);
            report.eps_used = pos != report.knee_curve.end() ? *pos : 1.0;
        }
        if (knee.weak_knee) report.warnings.push_back(type.label() + ": weak knee in the distance curve");
    }

    const auto labels = dbscan(features, {report.eps_used, options.min_samples});

    // Means come from clean records that were measured, not imputed by an earlier pass.
    std::map<DieIndex, std::pair<double, std::size_t>> die_sums;
    double wafer_sum = 0.0;
    std::size_t wafer_count = 0;
    for (std::size_t r = 0; r < idx.size(); ++r) {
        const auto& rec = wafer.capacitance[idx[r]];
        if (labels[r] == kNoise || rec.flagged_outlier) continue;
        auto& [sum, count] = die_sums[rec.die];
        sum += rec.value_fF;
        ++count;
        wafer_sum += rec.value_fF;
        ++wafer_count;
    }
    for (std::size_t r = 0; r < idx.size(); ++r) {
        if (labels[r] != kNoise) continue;
        auto& rec = result.records[idx[r]];
        Replacement rep;
        rep.record_index = idx[r];
        rep.die = rec.die;
        rep.structure = rec.structure;
        rep.old_value = rec.value_fF;
        if (auto it = die_sums.find(rec.die); it != die_sums.end()) {
            rep.new_value = it->second.first / static_cast<double>(it->second.second);
            rep.policy = ReplacementPolicy::DieMean;
        } else if (wafer_count > 0) {
            rep.new_value = wafer_sum / static_cast<double>(wafer_count);
            rep.policy = ReplacementPolicy::WaferMean;
        } else {
            report.warnings.push_back(type.label() + ": every record is noise; nothing replaced");
            report.replaced.clear();
            result.records = wafer.capacitance;
            break;
        }
        rec.value_fF = rep.new_value;
        rec.flagged_outlier = true;
        report.replaced.push_back(rep);
    }
    report.n_outliers = report.replaced.size();
    return result;
}

WaferDataset clean_wafer(const WaferDataset& wafer, const CleanOptions& options, std::vector<CleanReport>* reports) {
    WaferDataset out = wafer;
    for (const auto& type : all_structure_types()) {
        const bool present = std::any_of(wafer.capacitance.begin(), wafer.capacitance.end(),
                                         [&](const CapacitanceRecord& r) { return type.matches(r.structure); });
        if (!present) continue;
        auto res = clean_capacitance(wafer, type, options);
        for (const auto& rep : res.report.replaced) out.capacitance[rep.record_index] = res.records[rep.record_index];
        if (reports) reports->push_back(std::move(res.report));
    }
    return out;
}

std::string replacements_csv(const std::vector<CleanReport>& reports) {
    static constexpr std::string_view kHeader[] = {"wafer_id", "die_col",  "die_row",   "family", "level",
                                                   "orientation", "instance", "old_cap_fF", "new_cap_fF", "policy"};
    io::CsvWriter w(kHeader);
    for (const auto& rep : reports) {
        for (const auto& r : rep.replaced) {
            w.cell(rep.wafer_id).cell(r.die.col).cell(r.die.row);
            w.cell(to_string(r.structure.family)).cell(r.structure.level).cell(to_string(r.structure.orientation));
            w.cell(r.structure.instance).cell(r.old_value).cell(r.new_value).cell(to_string(r.policy));
            w.end_row();
        }
    }
    return w.text();
}

std::string clean_summary_csv(const std::vector<CleanReport>& reports) {
    static constexpr std::string_view kHeader[] = {"wafer_id", "structure",   "n_records", "n_outliers",
                                                   "eps",      "eps_source",  "weak_knee", "scale_cap",
                                                   "scale_col", "scale_row"};
    io::CsvWriter w(kHeader);
    for (const auto& rep : reports) {
        w.cell(rep.wafer_id).cell(rep.type.label()).cell(rep.n_records).cell(rep.n_outliers).cell(rep.eps_used);
        w.cell(rep.eps_from_knee ? "knee" : "override").cell(rep.weak_knee ? "1" : "0");
        w.cell(rep.scale[0]).cell(rep.scale[1]).cell(rep.scale[2]);
        w.end_row();
    }
    return w.text();
}

std::string knee_curve_csv(const std::vector<CleanReport>& reports) {
    static constexpr std::string_view kHeader[] = {"wafer_id", "structure", "rank", "distance"};
    io::CsvWriter w(kHeader);
    for (const auto& rep : reports) {
        for (std::size_t i = 0; i < rep.knee_curve.size(); ++i) {
            w.cell(rep.wafer_id).cell(rep.type.label()).cell(i).cell(rep.knee_curve[i]);
            w.end_row();
        }
    }
    return w.text();
}

}  // namespace waferwise::clean
