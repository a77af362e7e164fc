#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "waferwise/error.hpp"
#include "waferwise/learn.hpp"
#include "waferwise/rng.hpp"

namespace waferwise::learn {

namespace {

struct Split {
    int feature = -1;
    double threshold = 0.0;
    double score = -std::numeric_limits<double>::infinity();  // Σ_l²/n_l + Σ_r²/n_r
};

/// Strictly better score wins; exact ties go to the lower feature, then lower threshold.
bool better(const Split& cand, const Split& best) {
    if (cand.score != best.score) return cand.score > best.score;
    if (cand.feature != best.feature) return best.feature < 0 || cand.feature < best.feature;
    return cand.threshold < best.threshold;
}

class TreeBuilder {
public:
    TreeBuilder(const Matrix& x, std::span<const double> y, ModelKind kind, int max_features,
                int min_samples_split, std::uint64_t seed)
        : x_(x), y_(y), kind_(kind), max_features_(max_features),
          min_split_(std::max(2, min_samples_split)), rng_(seed) {
        features_.resize(x.cols());
        std::iota(features_.begin(), features_.end(), 0);
    }

    Tree build(std::vector<std::size_t> rows) {
        rows_ = std::move(rows);
        Tree tree;
        struct Pending {
            int node;
            std::size_t begin;
            std::size_t end;
        };
        tree.nodes.push_back({});
        std::vector<Pending> stack{{0, 0, rows_.size()}};
        while (!stack.empty()) {
            const Pending job = stack.back();
            stack.pop_back();
            const std::size_t count = job.end - job.begin;
            double sum = 0.0;
            bool pure = true;
            const double first = y_[rows_[job.begin]];
            for (std::size_t k = job.begin; k < job.end; ++k) {
                sum += y_[rows_[k]];
                pure = pure && y_[rows_[k]] == first;
            }
            tree.nodes[job.node].value = sum / static_cast<double>(count);
            if (count < static_cast<std::size_t>(min_split_) || pure) continue;

            const Split split = find_split(job.begin, job.end, sum);
            if (split.feature < 0) continue;

            auto mid_it = std::partition(rows_.begin() + static_cast<std::ptrdiff_t>(job.begin),
                                         rows_.begin() + static_cast<std::ptrdiff_t>(job.end),
                                         [&](std::size_t r) { return x_(r, split.feature) <= split.threshold; });
            const auto mid = static_cast<std::size_t>(mid_it - rows_.begin());
            if (mid == job.begin || mid == job.end) continue;

            const int left = static_cast<int>(tree.nodes.size());
            tree.nodes.push_back({});
            tree.nodes.push_back({});
            auto& node = tree.nodes[job.node];
            node.feature = split.feature;
            node.threshold = split.threshold;
            node.left = left;
            node.right = left + 1;
            // Right first so the left subtree is expanded next; node order stays depth-first.
            stack.push_back({left + 1, mid, job.end});
            stack.push_back({left, job.begin, mid});
        }
        return tree;
    }

private:
    Split find_split(std::size_t begin, std::size_t end, double total) {
        // Random feature order; visit until max_features non-constant candidates were evaluated.
        for (std::size_t k = 0; k + 1 < features_.size(); ++k) {
            const std::size_t pick = k + static_cast<std::size_t>(uniform01(rng_) * static_cast<double>(features_.size() - k));
            std::swap(features_[k], features_[std::min(pick, features_.size() - 1)]);
        }
        Split best;
        int evaluated = 0;
        for (std::size_t k = 0; k < features_.size() && evaluated < max_features_; ++k) {
            const int f = features_[k];
            const bool ok = kind_ == ModelKind::ExtraTrees ? random_split(f, begin, end, total, best)
                                                           : best_split(f, begin, end, total, best);
            if (ok) ++evaluated;
        }
        return best;
    }

    bool random_split(int f, std::size_t begin, std::size_t end, double total, Split& best) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (std::size_t k = begin; k < end; ++k) {
            const double v = x_(rows_[k], f);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (!(hi > lo)) return false;
        double t = lo + uniform01(rng_) * (hi - lo);
        if (t >= hi) t = lo;
        double sum_l = 0.0;
        std::size_t n_l = 0;
        for (std::size_t k = begin; k < end; ++k) {
            if (x_(rows_[k], f) <= t) {
                sum_l += y_[rows_[k]];
                ++n_l;
            }
        }
        const std::size_t n_r = (end - begin) - n_l;
        const double sum_r = total - sum_l;
        const Split cand{f, t, sum_l * sum_l / static_cast<double>(n_l) + sum_r * sum_r / static_cast<double>(n_r)};
        if (better(cand, best)) best = cand;
        return true;
    }

    bool best_split(int f, std::size_t begin, std::size_t end, double total, Split& best) {
        scratch_.clear();
        for (std::size_t k = begin; k < end; ++k) scratch_.emplace_back(x_(rows_[k], f), y_[rows_[k]]);
        std::sort(scratch_.begin(), scratch_.end());
        if (!(scratch_.back().first > scratch_.front().first)) return false;
        const std::size_t n = scratch_.size();
        double sum_l = 0.0;
        for (std::size_t k = 0; k + 1 < n; ++k) {
            sum_l += scratch_[k].second;
            const double a = scratch_[k].first;
            const double b = scratch_[k + 1].first;
            if (!(b > a)) continue;
            const double n_l = static_cast<double>(k + 1);
            const double n_r = static_cast<double>(n - k - 1);
            const double sum_r = total - sum_l;
            double t = a + (b - a) / 2.0;
            if (!(t < b)) t = a;
            const Split cand{f, t, sum_l * sum_l / n_l + sum_r * sum_r / n_r};
            if (better(cand, best)) best = cand;
        }
        return true;
    }

    const Matrix& x_;
    std::span<const double> y_;
    ModelKind kind_;
    int max_features_;
    int min_split_;
    Rng rng_;
    std::vector<int> features_;
    std::vector<std::size_t> rows_;
    std::vector<std::pair<double, double>> scratch_;
};

}  // namespace

double Tree::predict(std::span<const double> row) const {
    std::size_t i = 0;
    while (nodes[i].feature >= 0) {
        const auto& node = nodes[i];
        i = static_cast<std::size_t>(row[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left
                                                                                                   : node.right);
    }
    return nodes[i].value;
}

std::size_t Tree::depth() const {
    if (nodes.empty()) return 0;
    std::vector<std::size_t> depth(nodes.size(), 0);
    std::size_t best = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        best = std::max(best, depth[i]);
        if (nodes[i].feature >= 0) {
            depth[static_cast<std::size_t>(nodes[i].left)] = depth[i] + 1;
            depth[static_cast<std::size_t>(nodes[i].right)] = depth[i] + 1;
        }
    }
    return best;
}

Tree build_tree(const Matrix& x, std::span<const double> y, std::span<const std::size_t> rows, ModelKind kind,
                int max_features, int min_samples_split, std::uint64_t seed) {
    if (rows.empty()) throw Error("invalid_input", "build_tree: no rows");
    TreeBuilder builder(x, y, kind, max_features, min_samples_split, seed);
    return builder.build(std::vector<std::size_t>(rows.begin(), rows.end()));
}

FittedModel fit_forest(const FeatureMatrix& x, std::span<const double> y, const ModelSpec& spec,
                       const FitOptions& options) {
    if (spec.kind != ModelKind::RandomForest && spec.kind != ModelKind::ExtraTrees) {
        throw Error("invalid_input", "fit_forest needs RandomForest or ExtraTrees");
    }
    const std::size_t n = x.rows();
    if (n != y.size()) throw Error("invalid_input", "fit_forest: X and y row counts differ");
    if (n < 2) throw Error("invalid_input", "fit_forest: needs at least 2 rows");
    if (x.cols() == 0) throw Error("invalid_input", "fit_forest: no features");
    if (spec.forest.n_trees < 1) throw Error("invalid_input", "fit_forest: n_trees must be >= 1");

    FittedModel model;
    model.spec = spec;
    model.col_names = x.col_names;
    model.n_train = n;
    model.scaler = spec.scale_features ? fit_scaler(x.values) : identity_scaler(x.cols());
    model.warnings = model.scaler.warnings;
    const Matrix z = apply_scaler(model.scaler, x.values);

    const int max_features = spec.resolved_max_features(x.cols());
    const bool bootstrap = spec.resolved_bootstrap();
    const auto n_trees = static_cast<std::size_t>(spec.forest.n_trees);
    ForestParams forest;
    forest.trees.resize(n_trees);

    auto grow = [&](std::size_t t) {
        const std::uint64_t tree_seed = derive_seed(spec.seed, {t});
        std::vector<std::size_t> rows(n);
        if (bootstrap) {
            auto rng = make_rng(tree_seed, {0xB007});
            for (auto& r : rows) r = std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)));
        } else {
            std::iota(rows.begin(), rows.end(), 0);
        }
        forest.trees[t] = build_tree(z, y, rows, spec.kind, max_features, spec.forest.min_samples_split, tree_seed);
    };

    const auto jobs = static_cast<std::size_t>(std::max(1, options.jobs));
    if (jobs == 1) {
        for (std::size_t t = 0; t < n_trees; ++t) grow(t);
    } else {
        std::vector<std::jthread> workers;
        for (std::size_t w = 0; w < std::min(jobs, n_trees); ++w) {
            workers.emplace_back([&, w] {
                for (std::size_t t = w; t < n_trees; t += jobs) grow(t);
            });
        }
    }
    model.params = std::move(forest);
    return model;
}

double FittedModel::predict_row(std::span<const double> row) const {
    if (row.size() != n_features()) {
        throw Error("arity_mismatch", "model expects " + std::to_string(n_features()) + " features, got " +
                                          std::to_string(row.size()));
    }
    std::vector<double> z(row.begin(), row.end());
    for (std::size_t c = 0; c < z.size(); ++c) {
        if (!scaler.passthrough[c]) z[c] = z[c] / scaler.scale[c];
    }
    return std::visit(
        [&](const auto& p) -> double {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, LinearParams>) {
                double f = p.intercept;
                for (std::size_t c = 0; c < z.size(); ++c) f += p.coef[c] * z[c];
                return f;
            } else if constexpr (std::is_same_v<P, SvrParams>) {
                double f = p.bias;
                for (std::size_t s = 0; s < p.support.rows(); ++s) {
                    const auto sv = p.support.row(s);
                    double d2 = 0.0;
                    for (std::size_t c = 0; c < z.size(); ++c) d2 += (sv[c] - z[c]) * (sv[c] - z[c]);
                    f += p.dual_coef[s] * std::exp(-p.gamma * d2);
                }
                return f;
            } else {
                double sum = 0.0;
                for (const auto& tree : p.trees) sum += tree.predict(z);
                return sum / static_cast<double>(p.trees.size());
            }
        },
        params);
}

}  // namespace waferwise::learn
