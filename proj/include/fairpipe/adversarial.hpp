#pragma once

#include <cstdint>
#include <vector>

#include "fairpipe/scoring.hpp"

namespace fairpipe {

// Auxiliary gender classifier attached to the 300-dim latent h:
// 300 -> 20 sigmoid hidden layer (dropout 0.3), 20 -> 2 softmax output.
struct AdversaryHead {
    double dropout_rate = 0.3;
    ParamStore params;  // aw1/ab1, aw2/ab2

    static AdversaryHead init(std::uint64_t seed);
};

struct AdversarialConfig {
    TrainConfig train;    // target must be biased
    double lambda = 0.1;  // weight of the negative-conditional-entropy term
    double mu = 1.0;      // scale of the sign-flipped adversary gradient

    void validate() const;
};

struct AdvEpochStats {
    int epoch = 0;
    double train_rmse = 0.0;
    double val_rmse = 0.0;
    double adv_train_acc = 0.0;
    double adv_val_acc = 0.0;
};

// Records the adversary forward pass; h may be a constant or an upstream
// node. Parameters are recorded via `params` bindings when trainable.
NodeId adversary_graph(Tape& tape, AdversaryHead& adversary, NodeId h, bool train_flag,
                       Rng* dropout_rng);

// Same forward pass with the adversary's parameters as constants: gradients
// flow through the head into h but never into the head's own weights.
NodeId adversary_graph_const(Tape& tape, const AdversaryHead& adversary, NodeId h);

// Inference-mode posterior class accuracy of the adversary on latent rows.
double adversary_accuracy(const AdversaryHead& adversary, const Tensor& latents,
                          const std::vector<int>& genders);

// Min-max training: per batch, one adversary step on CE(q, z) with h fixed,
// then one scoring step on RMSE + lambda * negative-entropy with the
// adversary's CE gradient reversed (scale mu) flowing into the fusion
// network. With lambda = mu = 0 the scoring trajectory is bit-identical to
// plain training under the same seed.
std::vector<AdvEpochStats> adversarial_train(ScoringModel& model, AdversaryHead& adversary,
                                             const ProfileSet& train_set,
                                             const ProfileSet& val_set, const Embedder& embedder,
                                             const AdversarialConfig& config);

struct ProbeConfig {
    int epochs = 10;
    std::size_t batch_size = 32;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 0;
    double holdout_fraction = 0.25;

    AdamWConfig adamw() const { return {lr, beta1, beta2, eps, 0.0}; }
};

// Trains a fresh adversary-shaped probe on the given latent rows and
// reports held-out accuracy. Quantifies residual gender information.
double probe_gender_features(const Tensor& latents, const std::vector<int>& genders,
                             const ProbeConfig& config);

// Offline leakage measure against a frozen checkpoint.
double probe_gender(const ScoringModel& model, const Embedder& embedder,
                    const ProfileSet& profiles, const ProbeConfig& config);

void save_adv_history_csv(const std::vector<AdvEpochStats>& history, const std::string& path);

// Versioned binary checkpoint for the adversary head.
void save_adversary(const AdversaryHead& adversary, const std::string& path);
AdversaryHead load_adversary(const std::string& path);

}  // namespace fairpipe
