#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <unordered_map>

#include "waferwise/error.hpp"
#include "waferwise/learn.hpp"
#include "waferwise/log.hpp"

namespace waferwise::learn {

namespace {

constexpr double kTau = 1e-12;

double sq_dist(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double t = a[k] - b[k];
        s += t * t;
    }
    return s;
}

/// Kernel rows on demand with a bounded FIFO cache.
class KernelCache {
public:
    KernelCache(const Matrix& x, double gamma) : x_(x), gamma_(gamma) {
        const std::size_t n = x.rows();
        constexpr std::size_t kBudgetDoubles = std::size_t{1} << 25;  // 256 MiB
        capacity_ = std::max<std::size_t>(2, std::min(n, kBudgetDoubles / std::max<std::size_t>(n, 1)));
    }

    const std::vector<double>& row(std::size_t i) {
        if (auto it = rows_.find(i); it != rows_.end()) return it->second;
        if (rows_.size() >= capacity_) {
            rows_.erase(order_.front());
            order_.pop_front();
        }
        std::vector<double> k(x_.rows());
        const auto xi = x_.row(i);
        for (std::size_t j = 0; j < k.size(); ++j) k[j] = std::exp(-gamma_ * sq_dist(xi, x_.row(j)));
        order_.push_back(i);
        return rows_.emplace(i, std::move(k)).first->second;
    }

private:
    const Matrix& x_;
    double gamma_;
    std::size_t capacity_;
    std::unordered_map<std::size_t, std::vector<double>> rows_;
    std::deque<std::size_t> order_;
};

/// Dual of ε-SVR in 2n variables (α then α*), SMO with second-order working-set selection.
class SvrSolver {
public:
    SvrSolver(const Matrix& x, std::span<const double> y, const SvrSettings& s, double gamma)
        : n_(x.rows()), y_(y), c_(s.c), kernel_(x, gamma) {
        const std::size_t m = 2 * n_;
        alpha_.assign(m, 0.0);
        p_.resize(m);
        sign_.resize(m);
        for (std::size_t i = 0; i < n_; ++i) {
            p_[i] = s.epsilon - y[i];
            p_[i + n_] = s.epsilon + y[i];
            sign_[i] = 1;
            sign_[i + n_] = -1;
        }
        grad_ = p_;
        diag_.assign(m, 1.0);  // K(x, x) = 1 for RBF
    }

    /// Runs until the maximal KKT violation drops below tol. Returns false at the iteration cap.
    bool solve(double tol, std::size_t max_iterations) {
        while (iterations_ < max_iterations) {
            std::size_t i = 0;
            std::size_t j = 0;
            if (!select(tol, i, j)) return true;
            update(i, j);
            ++iterations_;
        }
        return false;
    }

    double violation() const {
        double gmax = -std::numeric_limits<double>::infinity();
        double gmax2 = -std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < alpha_.size(); ++t) {
            if (sign_[t] == 1) {
                if (alpha_[t] < c_) gmax = std::max(gmax, -grad_[t]);
                if (alpha_[t] > 0) gmax2 = std::max(gmax2, grad_[t]);
            } else {
                if (alpha_[t] > 0) gmax = std::max(gmax, grad_[t]);
                if (alpha_[t] < c_) gmax2 = std::max(gmax2, -grad_[t]);
            }
        }
        return gmax + gmax2;
    }

    /// f(x_i) without bias, recovered from the gradient: (Kβ)_i = G_i - p_i.
    double kernel_output(std::size_t i) const { return grad_[i] - p_[i]; }

    double rho() const {
        double ub = std::numeric_limits<double>::infinity();
        double lb = -std::numeric_limits<double>::infinity();
        double sum_free = 0.0;
        std::size_t n_free = 0;
        for (std::size_t t = 0; t < alpha_.size(); ++t) {
            const double yg = sign_[t] * grad_[t];
            if (alpha_[t] >= c_) {
                if (sign_[t] == -1) ub = std::min(ub, yg);
                else lb = std::max(lb, yg);
            } else if (alpha_[t] <= 0) {
                if (sign_[t] == 1) ub = std::min(ub, yg);
                else lb = std::max(lb, yg);
            } else {
                ++n_free;
                sum_free += yg;
            }
        }
        return n_free > 0 ? sum_free / static_cast<double>(n_free) : (ub + lb) / 2.0;
    }

    /// Minimization-form dual objective 0.5 αᵀQα + pᵀα.
    double dual_min_objective() const {
        double obj = 0.0;
        for (std::size_t t = 0; t < alpha_.size(); ++t) obj += alpha_[t] * (grad_[t] + p_[t]);
        return 0.5 * obj;
    }

    double beta(std::size_t i) const { return alpha_[i] - alpha_[i + n_]; }
    double alpha_sum(std::size_t i) const { return alpha_[i] + alpha_[i + n_]; }
    std::size_t iterations() const { return iterations_; }

private:
    double q(std::size_t a, std::size_t b) {
        return sign_[a] * sign_[b] * kernel_.row(a % n_)[b % n_];
    }

    bool select(double tol, std::size_t& out_i, std::size_t& out_j) {
        double gmax = -std::numeric_limits<double>::infinity();
        std::ptrdiff_t gmax_idx = -1;
        for (std::size_t t = 0; t < alpha_.size(); ++t) {
            if (sign_[t] == 1) {
                if (alpha_[t] < c_ && -grad_[t] >= gmax) {
                    gmax = -grad_[t];
                    gmax_idx = static_cast<std::ptrdiff_t>(t);
                }
            } else if (alpha_[t] > 0 && grad_[t] >= gmax) {
                gmax = grad_[t];
                gmax_idx = static_cast<std::ptrdiff_t>(t);
            }
        }
        if (gmax_idx < 0) return false;
        const auto i = static_cast<std::size_t>(gmax_idx);
        const auto& krow = kernel_.row(i % n_);

        double gmax2 = -std::numeric_limits<double>::infinity();
        double best = std::numeric_limits<double>::infinity();
        std::ptrdiff_t gmin_idx = -1;
        for (std::size_t t = 0; t < alpha_.size(); ++t) {
            const double q_it = sign_[i] * sign_[t] * krow[t % n_];
            if (sign_[t] == 1) {
                if (alpha_[t] > 0) {
                    const double grad_diff = gmax + grad_[t];
                    gmax2 = std::max(gmax2, grad_[t]);
                    if (grad_diff > 0) {
                        double quad = diag_[i] + diag_[t] - 2.0 * sign_[i] * q_it;
                        if (quad <= 0) quad = kTau;
                        const double obj = -(grad_diff * grad_diff) / quad;
                        if (obj <= best) {
                            best = obj;
                            gmin_idx = static_cast<std::ptrdiff_t>(t);
                        }
                    }
                }
            } else if (alpha_[t] < c_) {
                const double grad_diff = gmax - grad_[t];
                gmax2 = std::max(gmax2, -grad_[t]);
                if (grad_diff > 0) {
                    double quad = diag_[i] + diag_[t] + 2.0 * sign_[i] * q_it;
                    if (quad <= 0) quad = kTau;
                    const double obj = -(grad_diff * grad_diff) / quad;
                    if (obj <= best) {
                        best = obj;
                        gmin_idx = static_cast<std::ptrdiff_t>(t);
                    }
                }
            }
        }
        if (gmax + gmax2 < tol || gmin_idx < 0) return false;
        out_i = i;
        out_j = static_cast<std::size_t>(gmin_idx);
        return true;
    }

    void update(std::size_t i, std::size_t j) {
        const double q_ij = q(i, j);
        const double old_i = alpha_[i];
        const double old_j = alpha_[j];
        double& ai = alpha_[i];
        double& aj = alpha_[j];
        if (sign_[i] != sign_[j]) {
            double quad = diag_[i] + diag_[j] + 2.0 * q_ij;
            if (quad <= 0) quad = kTau;
            const double delta = (-grad_[i] - grad_[j]) / quad;
            const double diff = ai - aj;
            ai += delta;
            aj += delta;
            if (diff > 0) {
                if (aj < 0) {
                    aj = 0;
                    ai = diff;
                }
            } else if (ai < 0) {
                ai = 0;
                aj = -diff;
            }
            if (diff > 0) {
                if (ai > c_) {
                    ai = c_;
                    aj = c_ - diff;
                }
            } else if (aj > c_) {
                aj = c_;
                ai = c_ + diff;
            }
        } else {
            double quad = diag_[i] + diag_[j] - 2.0 * q_ij;
            if (quad <= 0) quad = kTau;
            const double delta = (grad_[i] - grad_[j]) / quad;
            const double sum = ai + aj;
            ai -= delta;
            aj += delta;
            if (sum > c_) {
                if (ai > c_) {
                    ai = c_;
                    aj = sum - c_;
                }
            } else if (aj < 0) {
                aj = 0;
                ai = sum;
            }
            if (sum > c_) {
                if (aj > c_) {
                    aj = c_;
                    ai = sum - c_;
                }
            } else if (ai < 0) {
                ai = 0;
                aj = sum;
            }
        }
        const double di = ai - old_i;
        const double dj = aj - old_j;
        const auto& ki = kernel_.row(i % n_);
        const auto& kj = kernel_.row(j % n_);
        for (std::size_t t = 0; t < alpha_.size(); ++t) {
            const std::size_t u = t % n_;
            grad_[t] += sign_[t] * (sign_[i] * ki[u] * di + sign_[j] * kj[u] * dj);
        }
    }

    std::size_t n_;
    std::span<const double> y_;
    double c_;
    KernelCache kernel_;
    std::vector<double> alpha_;
    std::vector<double> grad_;
    std::vector<double> p_;
    std::vector<int> sign_;
    std::vector<double> diag_;
    std::size_t iterations_ = 0;
};

double default_gamma(const Matrix& z) {
    const auto& v = z.data();
    if (v.empty()) return 1.0;
    double mean = 0.0;
    for (double t : v) mean += t;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double t : v) var += (t - mean) * (t - mean);
    var /= static_cast<double>(v.size());
    return var > 0.0 ? 1.0 / (static_cast<double>(z.cols()) * var) : 1.0;
}

}  // namespace

FittedModel fit_svr(const FeatureMatrix& x, std::span<const double> y, const ModelSpec& spec) {
    const std::size_t n = x.rows();
    if (n != y.size()) throw Error("invalid_input", "fit_svr: X and y row counts differ");
    if (n < 2) throw Error("invalid_input", "fit_svr: needs at least 2 rows");

    FittedModel model;
    model.spec = spec;
    model.spec.kind = ModelKind::SVR;
    model.col_names = x.col_names;
    model.n_train = n;
    model.scaler = spec.scale_features ? fit_scaler(x.values) : identity_scaler(x.cols());
    model.warnings = model.scaler.warnings;
    const Matrix z = apply_scaler(model.scaler, x.values);
    const SvrSettings& s = spec.svr;
    const double gamma = s.gamma > 0.0 ? s.gamma : default_gamma(z);

    SvrSolver solver(z, y, s, gamma);
    double tol = s.tolerance;
    double dual = 0.0;
    double primal = 0.0;
    double gap = 0.0;
    double rho = 0.0;
    while (true) {
        if (!solver.solve(tol, s.max_iterations)) {
            throw Error("nonconvergence", "SVR did not converge in " + std::to_string(s.max_iterations) +
                                              " iterations; KKT violation " + std::to_string(solver.violation()) +
                                              ", duality gap " + std::to_string(gap));
        }
        rho = solver.rho();
        const double dual_min = solver.dual_min_objective();
        dual = -dual_min;
        // 0.5 βᵀKβ = 0.5 Σ β_i (Kβ)_i
        double half_norm = 0.0;
        double loss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double kb = solver.kernel_output(i);
            half_norm += 0.5 * solver.beta(i) * kb;
            const double resid = std::abs(y[i] - (kb - rho));
            loss += std::max(0.0, resid - s.epsilon);
        }
        primal = half_norm + s.c * loss;
        gap = primal - dual;
        if (gap <= s.gap_tolerance * std::abs(dual) || tol <= 1e-10) break;
        tol *= 0.1;
    }
    if (gap > s.gap_tolerance * std::abs(dual)) {
        model.warnings.push_back("SVR duality gap " + std::to_string(gap) + " above tolerance");
        log::warn(model.warnings.back());
    }

    SvrParams p;
    p.gamma = gamma;
    p.bias = -rho;
    p.stats.iterations = solver.iterations();
    p.stats.dual_objective = dual;
    p.stats.primal_objective = primal;
    p.stats.duality_gap = gap;
    p.stats.final_violation = solver.violation();
    for (std::size_t i = 0; i < n; ++i) {
        const double b = solver.beta(i);
        if (b != 0.0) {
            p.support.append_row(z.row(i));
            p.dual_coef.push_back(b);
        }
    }
    if (p.support.rows() == 0) p.support = Matrix(0, z.cols());
    model.params = std::move(p);
    return model;
}

}  // namespace waferwise::learn
