#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <fstream>
#include <string>

#include <json.hpp>

#include "resparse/errors.hpp"
#include "resparse/readout.hpp"
#include "resparse/reservoir.hpp"

namespace resparse {

using Json = nlohmann::json;

inline Json to_json(const VectorXd& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

inline VectorXd vector_from_json(const Json& a) {
    VectorXd v(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
    return v;
}

inline Json to_json(const MatrixXd& m) {
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        Json row = Json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline MatrixXd matrix_from_json(const Json& rows) {
    const Eigen::Index nr = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index nc = nr > 0 ? static_cast<Eigen::Index>(rows[0].size()) : 0;
    MatrixXd m(nr, nc);
    for (Eigen::Index r = 0; r < nr; ++r)
        for (Eigen::Index c = 0; c < nc; ++c) m(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
    return m;
}

/// Sparse matrices travel as coordinate triplets.
inline Json to_json(const SparseMat& m) {
    Json j;
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    Json ri = Json::array(), ci = Json::array(), vals = Json::array();
    for (int k = 0; k < m.outerSize(); ++k) {
        for (SparseMat::InnerIterator it(m, k); it; ++it) {
            ri.push_back(it.row());
            ci.push_back(it.col());
            vals.push_back(it.value());
        }
    }
    j["row_indices"] = std::move(ri);
    j["col_indices"] = std::move(ci);
    j["values"] = std::move(vals);
    return j;
}

inline SparseMat sparse_from_json(const Json& j) {
    SparseMat m(j.at("rows").get<Eigen::Index>(), j.at("cols").get<Eigen::Index>());
    const auto& ri = j.at("row_indices");
    const auto& ci = j.at("col_indices");
    const auto& vals = j.at("values");
    if (ri.size() != ci.size() || ri.size() != vals.size())
        throw IngestError("sparse matrix arrays have mismatched lengths");
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(ri.size());
    for (std::size_t k = 0; k < ri.size(); ++k)
        trips.emplace_back(ri[k].get<int>(), ci[k].get<int>(), vals[k].get<double>());
    m.setFromTriplets(trips.begin(), trips.end());
    m.makeCompressed();
    return m;
}

inline Json to_json(const ReservoirParams& p) {
    return Json{{"n_nodes", p.n_nodes},
                {"n_inputs", p.n_inputs},
                {"alpha", p.alpha},
                {"rho", p.rho},
                {"recurrent_density", p.recurrent_density},
                {"mean_in_degree", p.mean_in_degree},
                {"in_degree_sigma_ln", p.in_degree_sigma_ln},
                {"input_scale", p.input_scale},
                {"signed_recurrent", p.signed_recurrent},
                {"seed", p.seed}};
}

inline ReservoirParams reservoir_params_from_json(const Json& j) {
    ReservoirParams p;
    p.n_nodes = j.at("n_nodes").get<int>();
    p.n_inputs = j.at("n_inputs").get<int>();
    p.alpha = j.at("alpha").get<double>();
    p.rho = j.at("rho").get<double>();
    p.recurrent_density = j.at("recurrent_density").get<double>();
    p.mean_in_degree = j.at("mean_in_degree").get<double>();
    p.in_degree_sigma_ln = j.at("in_degree_sigma_ln").get<double>();
    p.input_scale = j.at("input_scale").get<double>();
    p.signed_recurrent = j.at("signed_recurrent").get<bool>();
    p.seed = j.at("seed").get<std::uint64_t>();
    return p;
}

inline constexpr const char* kCheckpointFormat = "resparse-checkpoint-v1";

/// Container for exact experiment replay: reservoir matrices with their
/// header, the readout, and the stream seeds that drove training.
inline Json checkpoint_to_json(const Reservoir& res, const SparseReadout& readout,
                               std::uint64_t episode_seed, std::uint64_t arm_seed,
                               std::uint64_t episodes_trained) {
    Json j;
    j["format"] = kCheckpointFormat;
    j["n_nodes"] = res.params.n_nodes;
    j["n_inputs"] = res.params.n_inputs;
    j["seed"] = res.params.seed;
    j["params"] = to_json(res.params);
    j["reservoir"] = {{"w_in", to_json(res.input.weights)},
                      {"w", to_json(res.recurrent.weights)},
                      {"in_degrees", Json::array()},
                      {"spectral_radius", res.recurrent.spectral_radius}};
    for (Eigen::Index i = 0; i < res.input.in_degrees.size(); ++i)
        j["reservoir"]["in_degrees"].push_back(res.input.in_degrees[i]);
    j["readout"] = {{"theta_g", readout.theta_g},
                    {"theta_local", to_json(readout.theta_local)},
                    {"w_out", to_json(readout.w_out)}};
    j["streams"] = {{"episode_seed", episode_seed}, {"arm_seed", arm_seed}};
    j["episodes_trained"] = episodes_trained;
    return j;
}

struct Checkpoint {
    Reservoir reservoir;
    SparseReadout readout;
    std::uint64_t episode_seed = 0;
    std::uint64_t arm_seed = 0;
    std::uint64_t episodes_trained = 0;
};

inline Checkpoint checkpoint_from_json(const Json& j) {
    if (!j.contains("format") || j.at("format").get<std::string>() != kCheckpointFormat)
        throw IngestError("not a resparse checkpoint (missing or unknown format tag)");
    Checkpoint c;
    c.reservoir.params = reservoir_params_from_json(j.at("params"));
    c.reservoir.input.weights = sparse_from_json(j.at("reservoir").at("w_in"));
    c.reservoir.recurrent.weights = sparse_from_json(j.at("reservoir").at("w"));
    c.reservoir.recurrent.spectral_radius = j.at("reservoir").at("spectral_radius").get<double>();
    const auto& degrees = j.at("reservoir").at("in_degrees");
    c.reservoir.input.in_degrees.resize(static_cast<Eigen::Index>(degrees.size()));
    for (std::size_t i = 0; i < degrees.size(); ++i)
        c.reservoir.input.in_degrees[static_cast<Eigen::Index>(i)] = degrees[i].get<int>();
    c.readout.theta_g = j.at("readout").at("theta_g").get<double>();
    c.readout.theta_local = vector_from_json(j.at("readout").at("theta_local"));
    c.readout.w_out = matrix_from_json(j.at("readout").at("w_out"));
    c.episode_seed = j.at("streams").at("episode_seed").get<std::uint64_t>();
    c.arm_seed = j.at("streams").at("arm_seed").get<std::uint64_t>();
    c.episodes_trained = j.at("episodes_trained").get<std::uint64_t>();
    return c;
}

inline void write_json_file(const std::string& path, const Json& j, int indent = -1) {
    std::ofstream out(path);
    if (!out) throw IngestError("cannot write file: " + path);
    out << j.dump(indent) << "\n";
}

inline Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open file: " + path);
    Json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw IngestError("malformed JSON in " + path + ": " + e.what());
    }
    return j;
}

}  // namespace resparse
