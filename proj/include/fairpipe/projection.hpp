#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fairpipe/scoring.hpp"

namespace fairpipe {

struct TsneConfig {
    double perplexity = 30.0;
    int iterations = 1000;
    double learning_rate = 200.0;
    double early_exaggeration = 12.0;
    int exaggeration_iters = 250;
    double momentum_start = 0.5;
    double momentum_final = 0.8;
    int momentum_switch_iter = 250;
    std::uint64_t seed = 0;
    int log_every = 50;

    void validate(std::size_t n) const;
};

struct TsneResult {
    Tensor coords;  // n x 2, centered at the origin
    std::vector<std::pair<int, double>> objective_log;  // (iteration, KL)
    double final_objective = 0.0;
};

// Conditional Gaussian affinities with per-point bandwidths bisected to the
// target perplexity (entropy tolerance 1e-5, at most 50 steps). Rows sum
// to 1, diagonal zero.
Tensor conditional_affinities(const Tensor& points, double perplexity);

// p_ij = (p_{j|i} + p_{i|j}) / 2n; sums to 1 overall.
Tensor symmetrized_affinities(const Tensor& conditional);

// Exact O(n^2) t-SNE: gradient descent on KL(P||Q) with the Student-t
// low-dimensional kernel, early exaggeration, momentum switching, and the
// standard adaptive per-coordinate gains.
TsneResult tsne(const Tensor& points, const TsneConfig& config);

struct ProjectionRow {
    std::int64_t id = 0;
    int gender = 0;
    int sector = 0;
    double x = 0.0;
    double y = 0.0;
};

struct ProjectionResult {
    std::vector<ProjectionRow> rows;
    TsneResult tsne;
};

// Extracts the 300-dim latent for each sampled profile, projects to 2-D,
// and attaches gender/sector annotations.
ProjectionResult project_latents(const ScoringModel& model, const Embedder& embedder,
                                 const ProfileSet& sample, const TsneConfig& config);

// Deterministic gender x sector stratified subsample.
ProfileSet stratified_sample(const ProfileSet& profiles, std::size_t n, std::uint64_t seed);

// Mean over points of the fraction of the k nearest neighbours sharing the
// point's label.
double knn_label_agreement(const Tensor& coords, std::span<const int> labels, int k);

void save_projection_csv(const std::vector<ProjectionRow>& rows, const std::string& path);
std::string tsne_metadata_json(const TsneConfig& config, const TsneResult& result);

}  // namespace fairpipe
