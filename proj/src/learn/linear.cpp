#include <Eigen/Dense>
#include <Eigen/QR>

#include "waferwise/error.hpp"
#include "waferwise/learn.hpp"
#include "waferwise/log.hpp"

namespace waferwise::learn {

FittedModel fit_linear(const FeatureMatrix& x, std::span<const double> y, const ModelSpec& spec) {
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    if (n != y.size()) throw Error("invalid_input", "fit_linear: X and y row counts differ");
    if (n < 2) throw Error("invalid_input", "fit_linear: needs at least 2 rows");

    FittedModel model;
    model.spec = spec;
    model.spec.kind = ModelKind::Linear;
    model.col_names = x.col_names;
    model.n_train = n;
    model.scaler = spec.scale_features ? fit_scaler(x.values) : identity_scaler(d);
    model.warnings = model.scaler.warnings;
    const Matrix z = apply_scaler(model.scaler, x.values);

    Eigen::MatrixXd a(n, d);
    Eigen::VectorXd b(n);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < d; ++c) a(r, c) = z(r, c);
        b(r) = y[r];
    }
    const Eigen::RowVectorXd mean_x = a.colwise().mean();
    const double mean_y = b.mean();
    a.rowwise() -= mean_x;
    b.array() -= mean_y;

    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a);
    const Eigen::VectorXd beta = cod.solve(b);
    const auto rank = static_cast<std::size_t>(cod.rank());
    if (rank < d) {
        model.warnings.push_back("rank-deficient design (rank " + std::to_string(rank) + " of " +
                                 std::to_string(d) + "); minimum-norm solution");
        log::warn(model.warnings.back());
    }

    LinearParams p;
    p.coef.assign(beta.data(), beta.data() + d);
    p.intercept = mean_y - mean_x.dot(beta);
    p.rank = rank;
    model.params = std::move(p);
    return model;
}

}  // namespace waferwise::learn
