#include <json.hpp>

#include "waferwise/error.hpp"
#include "waferwise/io.hpp"
#include "waferwise/learn.hpp"

namespace waferwise::learn {

using nlohmann::json;

namespace {

constexpr const char* kFormat = "waferwise-model";

json spec_to_json(const ModelSpec& s) {
    json j;
    j["kind"] = std::string(to_string(s.kind));
    j["seed"] = s.seed;
    j["scale_features"] = s.scale_features;
    j["svr"] = {{"c", s.svr.c},
                {"epsilon", s.svr.epsilon},
                {"gamma", s.svr.gamma},
                {"tolerance", s.svr.tolerance},
                {"gap_tolerance", s.svr.gap_tolerance},
                {"max_iterations", s.svr.max_iterations}};
    j["forest"] = {{"n_trees", s.forest.n_trees},
                   {"min_samples_split", s.forest.min_samples_split},
                   {"max_features", s.forest.max_features}};
    j["forest"]["bootstrap"] = s.forest.bootstrap ? json(*s.forest.bootstrap) : json(nullptr);
    return j;
}

ModelSpec spec_from_json(const json& j) {
    ModelSpec s;
    const auto kind = parse_model_kind(j.at("kind").get<std::string>());
    if (!kind) throw Error("schema_mismatch", "model file: unknown kind");
    s.kind = *kind;
    s.seed = j.at("seed").get<std::uint64_t>();
    s.scale_features = j.at("scale_features").get<bool>();
    const auto& svr = j.at("svr");
    s.svr.c = svr.at("c").get<double>();
    s.svr.epsilon = svr.at("epsilon").get<double>();
    s.svr.gamma = svr.at("gamma").get<double>();
    s.svr.tolerance = svr.at("tolerance").get<double>();
    s.svr.gap_tolerance = svr.at("gap_tolerance").get<double>();
    s.svr.max_iterations = svr.at("max_iterations").get<std::size_t>();
    const auto& forest = j.at("forest");
    s.forest.n_trees = forest.at("n_trees").get<int>();
    s.forest.min_samples_split = forest.at("min_samples_split").get<int>();
    s.forest.max_features = forest.at("max_features").get<int>();
    if (!forest.at("bootstrap").is_null()) s.forest.bootstrap = forest.at("bootstrap").get<bool>();
    return s;
}

json matrix_to_json(const Matrix& m) {
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

Matrix matrix_from_json(const json& j) {
    const auto rows = j.at("rows").get<std::size_t>();
    const auto cols = j.at("cols").get<std::size_t>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (data.size() != rows * cols) throw Error("schema_mismatch", "model file: matrix size mismatch");
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) m(r, c) = data[r * cols + c];
    }
    return m;
}

json params_to_json(const ModelParams& params) {
    return std::visit(
        [](const auto& p) -> json {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, LinearParams>) {
                return {{"coef", p.coef}, {"intercept", p.intercept}, {"rank", p.rank}};
            } else if constexpr (std::is_same_v<P, SvrParams>) {
                return {{"support", matrix_to_json(p.support)},
                        {"dual_coef", p.dual_coef},
                        {"bias", p.bias},
                        {"gamma", p.gamma},
                        {"stats",
                         {{"iterations", p.stats.iterations},
                          {"dual_objective", p.stats.dual_objective},
                          {"primal_objective", p.stats.primal_objective},
                          {"duality_gap", p.stats.duality_gap},
                          {"final_violation", p.stats.final_violation}}}};
            } else {
                json trees = json::array();
                for (const auto& tree : p.trees) {
                    std::vector<int> feature;
                    std::vector<double> threshold;
                    std::vector<int> left;
                    std::vector<int> right;
                    std::vector<double> value;
                    for (const auto& n : tree.nodes) {
                        feature.push_back(n.feature);
                        threshold.push_back(n.threshold);
                        left.push_back(n.left);
                        right.push_back(n.right);
                        value.push_back(n.value);
                    }
                    trees.push_back({{"feature", feature},
                                     {"threshold", threshold},
                                     {"left", left},
                                     {"right", right},
                                     {"value", value}});
                }
                return {{"trees", trees}};
            }
        },
        params);
}

ModelParams params_from_json(ModelKind kind, const json& j, std::size_t n_features) {
    switch (kind) {
        case ModelKind::Linear: {
            LinearParams p;
            p.coef = j.at("coef").get<std::vector<double>>();
            p.intercept = j.at("intercept").get<double>();
            p.rank = j.at("rank").get<std::size_t>();
            if (p.coef.size() != n_features) throw Error("schema_mismatch", "model file: coefficient count");
            return p;
        }
        case ModelKind::SVR: {
            SvrParams p;
            p.support = matrix_from_json(j.at("support"));
            p.dual_coef = j.at("dual_coef").get<std::vector<double>>();
            p.bias = j.at("bias").get<double>();
            p.gamma = j.at("gamma").get<double>();
            const auto& st = j.at("stats");
            p.stats.iterations = st.at("iterations").get<std::size_t>();
            p.stats.dual_objective = st.at("dual_objective").get<double>();
            p.stats.primal_objective = st.at("primal_objective").get<double>();
            p.stats.duality_gap = st.at("duality_gap").get<double>();
            p.stats.final_violation = st.at("final_violation").get<double>();
            if (p.support.rows() != p.dual_coef.size() || (p.support.rows() > 0 && p.support.cols() != n_features)) {
                throw Error("schema_mismatch", "model file: support vector shape");
            }
            if (p.support.rows() == 0) p.support = Matrix(0, n_features);
            return p;
        }
        case ModelKind::RandomForest:
        case ModelKind::ExtraTrees: {
            ForestParams p;
            for (const auto& t : j.at("trees")) {
                const auto feature = t.at("feature").get<std::vector<int>>();
                const auto threshold = t.at("threshold").get<std::vector<double>>();
                const auto left = t.at("left").get<std::vector<int>>();
                const auto right = t.at("right").get<std::vector<int>>();
                const auto value = t.at("value").get<std::vector<double>>();
                const std::size_t m = feature.size();
                if (m == 0 || threshold.size() != m || left.size() != m || right.size() != m || value.size() != m) {
                    throw Error("schema_mismatch", "model file: ragged tree arrays");
                }
                Tree tree;
                for (std::size_t i = 0; i < m; ++i) {
                    const bool split = feature[i] >= 0;
                    if (split && (feature[i] >= static_cast<int>(n_features) || left[i] <= static_cast<int>(i) ||
                                  right[i] <= static_cast<int>(i) || left[i] >= static_cast<int>(m) ||
                                  right[i] >= static_cast<int>(m))) {
                        throw Error("schema_mismatch", "model file: malformed tree node");
                    }
                    tree.nodes.push_back({feature[i], threshold[i], left[i], right[i], value[i]});
                }
                p.trees.push_back(std::move(tree));
            }
            if (p.trees.empty()) throw Error("schema_mismatch", "model file: forest without trees");
            return p;
        }
    }
    throw Error("schema_mismatch", "model file: unknown kind");
}

}  // namespace

std::string serialize_model(const FittedModel& model) {
    json j;
    j["format"] = kFormat;
    j["version"] = kModelFormatVersion;
    j["spec"] = spec_to_json(model.spec);
    j["col_names"] = model.col_names;
    j["n_features"] = model.n_features();
    j["n_train"] = model.n_train;
    j["scaler"] = {{"scale", model.scaler.scale}, {"passthrough", model.scaler.passthrough}};
    j["warnings"] = model.warnings;
    j["params"] = params_to_json(model.params);
    return j.dump(1) + "\n";
}

FittedModel deserialize_model(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error("schema_mismatch", std::string("model file is not valid JSON: ") + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != kFormat) throw Error("schema_mismatch", "not a waferwise model file");
        const int version = j.at("version").get<int>();
        if (version != kModelFormatVersion) {
            throw Error("schema_mismatch", "unsupported model format version " + std::to_string(version));
        }
        FittedModel m;
        m.spec = spec_from_json(j.at("spec"));
        m.col_names = j.at("col_names").get<std::vector<std::string>>();
        m.n_train = j.at("n_train").get<std::size_t>();
        m.scaler.scale = j.at("scaler").at("scale").get<std::vector<double>>();
        m.scaler.passthrough = j.at("scaler").at("passthrough").get<std::vector<bool>>();
        m.warnings = j.at("warnings").get<std::vector<std::string>>();
        const auto d = j.at("n_features").get<std::size_t>();
        if (m.scaler.scale.size() != d || m.scaler.passthrough.size() != d ||
            (!m.col_names.empty() && m.col_names.size() != d)) {
            throw Error("schema_mismatch", "model file: feature count disagrees with scaler/col_names");
        }
        m.params = params_from_json(m.spec.kind, j.at("params"), d);
        return m;
    } catch (const json::exception& e) {
        throw Error("schema_mismatch", std::string("model file: ") + e.what());
    }
}

void save_model(const FittedModel& model, const std::filesystem::path& path) {
    io::write_file_atomic(path, serialize_model(model));
}

FittedModel load_model(const std::filesystem::path& path) { return deserialize_model(io::read_file(path)); }

}  // namespace waferwise::learn
