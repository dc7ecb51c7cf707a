#include "fairpipe/projection.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <numeric>

#include "fairpipe/errors.hpp"

namespace fairpipe {

namespace {

constexpr double kMinProb = 1e-12;

// Row-major n x n squared Euclidean distances.
std::vector<double> squared_distances(const Tensor& points) {
    const std::size_t n = points.rows();
    const std::size_t d = points.cols();
    std::vector<double> dist(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double sum = 0.0;
            const double* a = points.data.data() + i * d;
            const double* b = points.data.data() + j * d;
            for (std::size_t c = 0; c < d; ++c) {
                const double diff = a[c] - b[c];
                sum += diff * diff;
            }
            dist[i * n + j] = sum;
            dist[j * n + i] = sum;
        }
    }
    return dist;
}

// Gaussian row with precision beta; returns entropy in nats.
double row_entropy(const std::vector<double>& dist, std::size_t n, std::size_t i, double beta,
                   std::vector<double>* row) {
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double p = j == i ? 0.0 : std::exp(-beta * dist[i * n + j]);
        (*row)[j] = p;
        sum += p;
    }
    sum = std::max(sum, std::numeric_limits<double>::min());
    double entropy = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        (*row)[j] /= sum;
        if ((*row)[j] > 0.0) entropy -= (*row)[j] * std::log((*row)[j]);
    }
    return entropy;
}

}  // namespace

void TsneConfig::validate(std::size_t n) const {
    if (n < 10) throw ConfigError("tsne: need at least 10 points");
    if (perplexity <= 1.0 || perplexity >= static_cast<double>(n) / 3.0) {
        throw ConfigError("tsne: perplexity must lie in (1, n/3)");
    }
    if (iterations <= exaggeration_iters) {
        throw ConfigError("tsne: iterations must exceed the early-exaggeration span");
    }
    if (learning_rate <= 0.0) throw ConfigError("tsne: learning_rate must be positive");
    if (early_exaggeration < 1.0) throw ConfigError("tsne: early_exaggeration must be >= 1");
    if (log_every <= 0) throw ConfigError("tsne: log_every must be positive");
}

Tensor conditional_affinities(const Tensor& points, double perplexity) {
    const std::size_t n = points.rows();
    const auto dist = squared_distances(points);
    if (*std::max_element(dist.begin(), dist.end()) == 0.0) {
        throw NumericError("tsne: all input points are identical; affinities are degenerate");
    }
    const double target = std::log(perplexity);
    Tensor cond = Tensor::zeros({n, n});
    std::vector<double> row(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double beta = 1.0;
        double beta_min = -std::numeric_limits<double>::infinity();
        double beta_max = std::numeric_limits<double>::infinity();
        double entropy = row_entropy(dist, n, i, beta, &row);
        for (int step = 0; step < 50 && std::abs(entropy - target) > 1e-5; ++step) {
            if (entropy > target) {
                beta_min = beta;
                beta = std::isinf(beta_max) ? beta * 2.0 : 0.5 * (beta + beta_max);
            } else {
                beta_max = beta;
                beta = std::isinf(beta_min) ? beta * 0.5 : 0.5 * (beta + beta_min);
            }
            entropy = row_entropy(dist, n, i, beta, &row);
        }
        for (std::size_t j = 0; j < n; ++j) cond.data[i * n + j] = row[j];
    }
    return cond;
}

Tensor symmetrized_affinities(const Tensor& conditional) {
    const std::size_t n = conditional.rows();
    Tensor p = Tensor::zeros({n, n});
    const double inv = 1.0 / (2.0 * static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            p.data[i * n + j] =
                (conditional.data[i * n + j] + conditional.data[j * n + i]) * inv;
        }
    }
    return p;
}

TsneResult tsne(const Tensor& points, const TsneConfig& config) {
    const std::size_t n = points.rows();
    config.validate(n);
    check_finite(points, "tsne");

    const Tensor p = symmetrized_affinities(conditional_affinities(points, config.perplexity));

    Rng rng(derive_seed(config.seed, "tsne-init"));
    Tensor y = Tensor::zeros({n, 2});
    for (double& v : y.data) v = rng.gaussian() * 1e-4;
    std::vector<double> inc(n * 2, 0.0);
    std::vector<double> gains(n * 2, 1.0);
    std::vector<double> qnum(n * n, 0.0);
    std::vector<double> grad(n * 2, 0.0);

    auto kl_objective = [&]() {
        double sum_q = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) sum_q += 2.0 * qnum[i * n + j];
        }
        sum_q = std::max(sum_q, std::numeric_limits<double>::min());
        double kl = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) continue;
                const double pij = p.data[i * n + j];
                if (pij <= 0.0) continue;
                const double qij = std::max(qnum[i * n + j] / sum_q, kMinProb);
                kl += pij * std::log(pij / qij);
            }
        }
        return kl;
    };

    TsneResult result;
    for (int iter = 1; iter <= config.iterations; ++iter) {
        // Student-t numerators on the current map.
        double sum_q = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            qnum[i * n + i] = 0.0;
            for (std::size_t j = i + 1; j < n; ++j) {
                const double dx = y.data[i * 2] - y.data[j * 2];
                const double dy = y.data[i * 2 + 1] - y.data[j * 2 + 1];
                const double q = 1.0 / (1.0 + dx * dx + dy * dy);
                qnum[i * n + j] = q;
                qnum[j * n + i] = q;
                sum_q += 2.0 * q;
            }
        }
        sum_q = std::max(sum_q, std::numeric_limits<double>::min());

        const double exaggeration =
            iter <= config.exaggeration_iters ? config.early_exaggeration : 1.0;
        std::fill(grad.begin(), grad.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) continue;
                const double q = qnum[i * n + j];
                const double mult = (exaggeration * p.data[i * n + j] - q / sum_q) * q;
                grad[i * 2] += 4.0 * mult * (y.data[i * 2] - y.data[j * 2]);
                grad[i * 2 + 1] += 4.0 * mult * (y.data[i * 2 + 1] - y.data[j * 2 + 1]);
            }
        }

        const double momentum =
            iter <= config.momentum_switch_iter ? config.momentum_start : config.momentum_final;
        for (std::size_t i = 0; i < n * 2; ++i) {
            const bool same_sign = (grad[i] > 0.0) == (inc[i] > 0.0);
            gains[i] = same_sign ? gains[i] * 0.8 : gains[i] + 0.2;
            gains[i] = std::max(gains[i], 0.01);
            inc[i] = momentum * inc[i] - config.learning_rate * gains[i] * grad[i];
            y.data[i] += inc[i];
        }
        double mean_x = 0.0;
        double mean_y = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            mean_x += y.data[i * 2];
            mean_y += y.data[i * 2 + 1];
        }
        mean_x /= static_cast<double>(n);
        mean_y /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            y.data[i * 2] -= mean_x;
            y.data[i * 2 + 1] -= mean_y;
        }

        if (iter % config.log_every == 0 || iter == config.iterations) {
            const double kl = kl_objective();
            if (!std::isfinite(kl)) throw NumericError("tsne: objective became non-finite");
            if (result.objective_log.empty() || result.objective_log.back().first != iter) {
                result.objective_log.emplace_back(iter, kl);
            }
        }
    }
    result.final_objective = result.objective_log.back().second;
    result.coords = std::move(y);
    return result;
}

ProjectionResult project_latents(const ScoringModel& model, const Embedder& embedder,
                                 const ProfileSet& sample, const TsneConfig& config) {
    const FeatureSet f = compute_features(sample, embedder);
    const Tensor latents = infer_latents(model, f);
    ProjectionResult out;
    out.tsne = tsne(latents, config);
    out.rows.reserve(sample.size());
    for (std::size_t i = 0; i < sample.size(); ++i) {
        ProjectionRow row;
        row.id = sample[i].id;
        row.gender = sample[i].gender;
        row.sector = sample[i].sector;
        row.x = out.tsne.coords.data[i * 2];
        row.y = out.tsne.coords.data[i * 2 + 1];
        out.rows.push_back(row);
    }
    return out;
}

ProfileSet stratified_sample(const ProfileSet& profiles, std::size_t n, std::uint64_t seed) {
    if (n >= profiles.size()) return profiles;
    std::array<std::vector<std::size_t>, 8> strata;
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        strata[static_cast<std::size_t>(profiles[i].gender + 2 * profiles[i].sector)].push_back(i);
    }
    std::vector<std::size_t> chosen;
    std::size_t remaining = n;
    std::size_t strata_left = 0;
    for (const auto& s : strata) strata_left += s.empty() ? 0 : 1;
    for (std::size_t s = 0; s < strata.size(); ++s) {
        auto members = strata[s];
        if (members.empty()) continue;
        Rng rng(derive_seed(seed, "sample", s));
        rng.shuffle(members);
        const std::size_t take = std::min(members.size(), remaining / strata_left);
        for (std::size_t i = 0; i < take; ++i) chosen.push_back(members[i]);
        remaining -= take;
        --strata_left;
    }
    std::sort(chosen.begin(), chosen.end());
    ProfileSet out;
    out.reserve(chosen.size());
    for (const auto i : chosen) out.push_back(profiles[i]);
    return out;
}

double knn_label_agreement(const Tensor& coords, std::span<const int> labels, int k) {
    const std::size_t n = coords.rows();
    if (labels.size() != n) throw DataError("knn: label count mismatch");
    if (k <= 0 || static_cast<std::size_t>(k) >= n) throw ConfigError("knn: invalid k");
    const std::size_t d = coords.cols();
    double total = 0.0;
    std::vector<std::pair<double, std::size_t>> dist(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double sum = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                const double diff = coords.data[i * d + c] - coords.data[j * d + c];
                sum += diff * diff;
            }
            dist[j] = {sum, j};
        }
        dist[i].first = std::numeric_limits<double>::infinity();  // exclude self
        std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
        int same = 0;
        for (int r = 0; r < k; ++r) {
            if (labels[dist[static_cast<std::size_t>(r)].second] == labels[i]) ++same;
        }
        total += static_cast<double>(same) / static_cast<double>(k);
    }
    return total / static_cast<double>(n);
}

void save_projection_csv(const std::vector<ProjectionRow>& rows, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write projection csv '" + path + "'");
    out << "id,gender,sector,x,y\n";
    char buf[192];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%lld,%d,%d,%.17g,%.17g\n",
                      static_cast<long long>(r.id), r.gender, r.sector, r.x, r.y);
        out << buf;
    }
}

std::string tsne_metadata_json(const TsneConfig& config, const TsneResult& result) {
    nlohmann::json j;
    j["perplexity"] = config.perplexity;
    j["iterations"] = config.iterations;
    j["learning_rate"] = config.learning_rate;
    j["early_exaggeration"] = config.early_exaggeration;
    j["exaggeration_iters"] = config.exaggeration_iters;
    j["momentum_start"] = config.momentum_start;
    j["momentum_final"] = config.momentum_final;
    j["momentum_switch_iter"] = config.momentum_switch_iter;
    j["seed"] = config.seed;
    j["gains"] = {{"increase", 0.2}, {"decay", 0.8}, {"floor", 0.01}};
    j["final_objective"] = result.final_objective;
    nlohmann::json log = nlohmann::json::array();
    for (const auto& [iter, kl] : result.objective_log) {
        log.push_back({{"iteration", iter}, {"kl", kl}});
    }
    j["objective_log"] = log;
    return j.dump(2) + "\n";
}

}  // namespace fairpipe
