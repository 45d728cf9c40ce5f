#include "cd3t/subtask/subtask_set.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "cd3t/errors.hpp"
#include "cd3t/subtask/kmeans.hpp"

namespace cd3t::subtask {

using nlohmann::json;

std::vector<int> SubtaskSet::member_actions(int subtask) const {
    std::vector<int> out;
    for (int a = 0; a < n_actions(); ++a) {
        if (members.at(static_cast<std::size_t>(subtask))[static_cast<std::size_t>(a)]) out.push_back(a);
    }
    return out;
}

int SubtaskSet::mask_size(int subtask) const {
    const auto& m = masks.at(static_cast<std::size_t>(subtask));
    return static_cast<int>(std::count(m.begin(), m.end(), true));
}

torch::Tensor SubtaskSet::mask_tensor() const {
    auto out = torch::zeros({clusters, n_actions()}, torch::kBool);
    auto acc = out.accessor<bool, 2>();
    for (int j = 0; j < clusters; ++j) {
        for (int a = 0; a < n_actions(); ++a) acc[j][a] = masks[static_cast<std::size_t>(j)][static_cast<std::size_t>(a)];
    }
    return out;
}

namespace {

bool same_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && (a.size() == 0 || a == b);
}

}  // namespace

bool identical(const SubtaskSet& a, const SubtaskSet& b) {
    return a.clusters == b.clusters && a.action_to_subtask == b.action_to_subtask && a.members == b.members &&
           a.masks == b.masks && a.frozen_at == b.frozen_at && same_matrix(a.centroids, b.centroids) &&
           same_matrix(a.subtask_reps, b.subtask_reps) && same_matrix(a.action_representations, b.action_representations);
}

torch::Tensor SubtaskSet::subtask_rep_tensor(const torch::TensorOptions& options) const { return to_tensor(subtask_reps, options); }

Eigen::MatrixXd to_eigen(const torch::Tensor& matrix) {
    auto m = matrix.detach().to(torch::kCPU).to(torch::kFloat64).contiguous();
    if (m.dim() != 2) throw InputError("expected a matrix");
    Eigen::MatrixXd out(m.size(0), m.size(1));
    auto acc = m.accessor<double, 2>();
    for (int64_t i = 0; i < m.size(0); ++i) {
        for (int64_t j = 0; j < m.size(1); ++j) out(i, j) = acc[i][j];
    }
    return out;
}

torch::Tensor to_tensor(const Eigen::MatrixXd& matrix, const torch::TensorOptions& options) {
    auto out = torch::empty({matrix.rows(), matrix.cols()}, torch::kFloat64);
    auto acc = out.accessor<double, 2>();
    for (Eigen::Index i = 0; i < matrix.rows(); ++i) {
        for (Eigen::Index j = 0; j < matrix.cols(); ++j) acc[i][j] = matrix(i, j);
    }
    return out.to(options);
}

Eigen::MatrixXd collect_action_representations(diffusion::ActionEncoderImpl& encoder, int n_actions) {
    torch::NoGradGuard no_grad;
    auto params = encoder.parameters();
    if (params.empty()) throw InputError("encoder has no parameters");
    return to_eigen(encoder.forward(torch::eye(n_actions, params.front().options())));
}

Eigen::VectorXd subtask_representation(const Eigen::MatrixXd& Z, const std::vector<int>& assignments, int subtask) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(Z.cols());
    int count = 0;
    for (Eigen::Index m = 0; m < Z.rows(); ++m) {
        if (assignments[static_cast<std::size_t>(m)] == subtask) {
            sum += Z.row(m).transpose();
            ++count;
        }
    }
    if (count == 0) throw std::logic_error("subtask " + std::to_string(subtask) + " has no member actions");
    return sum / static_cast<double>(count);
}

SubtaskSet finalize_decomposition(const Eigen::MatrixXd& Z, const DecompositionConfig& config, std::int64_t t_now) {
    if (t_now < config.update_start) {
        throw UsageError("decomposition requested at t=" + std::to_string(t_now) + " before update start " +
                         std::to_string(config.update_start));
    }
    const auto clustering = kmeans_partition(Z, config.clusters, config.seed);

    SubtaskSet set;
    set.clusters = config.clusters;
    set.centroids = clustering.centroids;
    set.action_to_subtask = clustering.assignments;
    set.action_representations = Z;
    set.frozen_at = t_now;
    set.subtask_reps.resize(config.clusters, Z.cols());
    const auto n_actions = static_cast<std::size_t>(Z.rows());
    for (int j = 0; j < config.clusters; ++j) {
        set.subtask_reps.row(j) = subtask_representation(Z, clustering.assignments, j).transpose();
        ActionSubset member(n_actions, false);
        for (std::size_t a = 0; a < n_actions; ++a) member[a] = clustering.assignments[a] == j;
        set.members.push_back(member);
        if (config.noop_action >= 0) member[static_cast<std::size_t>(config.noop_action)] = true;
        set.masks.push_back(std::move(member));
    }
    return set;
}

const SubtaskSet& Decomposition::finalize(const Eigen::MatrixXd& Z, std::int64_t t_now) {
    if (finalized()) throw UsageError("subtask decomposition already finalized");
    subtasks_ = finalize_decomposition(Z, config_, t_now);
    return *subtasks_;
}

void Decomposition::restore(SubtaskSet subtasks) { subtasks_ = std::move(subtasks); }

const SubtaskSet& Decomposition::get() const {
    if (!finalized()) throw UsageError("subtask decomposition not finalized yet");
    return *subtasks_;
}

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        std::vector<double> r(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(j)] = m(i, j);
        rows.push_back(r);
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const json& rows) {
    if (rows.empty()) return {};
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.at(0).size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto r = rows.at(i).get<std::vector<double>>();
        if (static_cast<Eigen::Index>(r.size()) != m.cols()) throw LoadError("ragged matrix in decomposition file");
        for (std::size_t j = 0; j < r.size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = r[j];
    }
    return m;
}

std::vector<int> subset_ids(const ActionSubset& s) {
    std::vector<int> out;
    for (std::size_t a = 0; a < s.size(); ++a) {
        if (s[a]) out.push_back(static_cast<int>(a));
    }
    return out;
}

}  // namespace

std::string decomposition_to_json(const SubtaskSet& subtasks) {
    json j;
    j["J"] = subtasks.clusters;
    j["frozen_at"] = subtasks.frozen_at;
    j["action_to_subtask"] = subtasks.action_to_subtask;
    j["action_representations"] = matrix_to_json(subtasks.action_representations);
    j["centroids"] = matrix_to_json(subtasks.centroids);
    j["subtask_reps"] = matrix_to_json(subtasks.subtask_reps);
    json list = json::array();
    for (int s = 0; s < subtasks.clusters; ++s) {
        list.push_back({{"id", s},
                        {"actions", subset_ids(subtasks.members[static_cast<std::size_t>(s)])},
                        {"mask", subset_ids(subtasks.masks[static_cast<std::size_t>(s)])}});
    }
    j["subtasks"] = list;
    return j.dump(2);
}

SubtaskSet decomposition_from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        SubtaskSet s;
        s.clusters = j.at("J").get<int>();
        s.frozen_at = j.at("frozen_at").get<std::int64_t>();
        s.action_to_subtask = j.at("action_to_subtask").get<std::vector<int>>();
        s.action_representations = matrix_from_json(j.at("action_representations"));
        s.centroids = matrix_from_json(j.at("centroids"));
        s.subtask_reps = matrix_from_json(j.at("subtask_reps"));
        const auto n_actions = s.action_to_subtask.size();
        for (const auto& entry : j.at("subtasks")) {
            ActionSubset member(n_actions, false);
            ActionSubset mask(n_actions, false);
            for (int a : entry.at("actions").get<std::vector<int>>()) member.at(static_cast<std::size_t>(a)) = true;
            for (int a : entry.at("mask").get<std::vector<int>>()) mask.at(static_cast<std::size_t>(a)) = true;
            s.members.push_back(member);
            s.masks.push_back(mask);
        }
        if (static_cast<int>(s.members.size()) != s.clusters) throw LoadError("subtask count does not match J");
        return s;
    } catch (const json::exception& e) {
        throw LoadError(std::string("malformed decomposition: ") + e.what());
    } catch (const std::out_of_range& e) {
        throw LoadError(std::string("malformed decomposition: ") + e.what());
    }
}

void write_decomposition(const SubtaskSet& subtasks, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write decomposition to " + path.string());
    out << decomposition_to_json(subtasks) << '\n';
}

SubtaskSet read_decomposition(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open decomposition file " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return decomposition_from_json(buffer.str());
}

}  // namespace cd3t::subtask
