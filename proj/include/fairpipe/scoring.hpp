#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fairpipe/embed.hpp"
#include "fairpipe/param_store.hpp"
#include "fairpipe/tape.hpp"

namespace fairpipe {

inline constexpr std::size_t kLatentDim = 300;
inline constexpr std::size_t kHidden2Dim = 20;

// Fusion network: N -> 300 -> 20, then the 20-dim hidden output is
// concatenated with the 7 competencies and mapped to a single score.
// Sigmoid activations throughout; dropout 0.3 between the hidden layers.
struct ScoringModel {
    std::size_t embed_dim = 768;
    double dropout_rate = 0.3;
    EmbedderConfig embedder;
    ParamStore params;  // w1/b1, w2/b2, w3/b3

    static ScoringModel init(std::size_t embed_dim, const EmbedderConfig& embedder,
                             std::uint64_t seed);
};

enum class TrainTarget { blind, biased };
std::string to_string(TrainTarget t);
TrainTarget train_target_from_string(const std::string& s);

struct TrainConfig {
    int epochs = 10;
    std::size_t batch_size = 32;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    std::uint64_t seed = 0;
    TrainTarget target = TrainTarget::blind;

    void validate() const;
    AdamWConfig adamw() const { return {lr, beta1, beta2, eps, weight_decay}; }
};

struct EpochStats {
    int epoch = 0;
    double train_rmse = 0.0;
    double val_rmse = 0.0;
};

// Pooled features for a profile set, computed once because the embedding
// stage is frozen.
struct FeatureSet {
    Tensor ft;  // n x N
    Tensor x;   // n x 7
    std::vector<double> blind;
    std::vector<double> biased;
    std::vector<int> gender;
    std::vector<std::int64_t> ids;

    std::size_t size() const { return ids.size(); }
    const std::vector<double>& target(TrainTarget t) const {
        return t == TrainTarget::blind ? blind : biased;
    }
};

FeatureSet compute_features(const ProfileSet& profiles, const Embedder& embedder);

// Records the fusion forward pass on the tape; returns the score node and
// writes the pre-dropout latent node to h_out. dropout_rng may be null when
// train_flag is false.
NodeId scoring_graph(Tape& tape, ScoringModel& model, NodeId ft, NodeId x, bool train_flag,
                     Rng* dropout_rng, NodeId* h_out);

// Same forward pass with the parameters recorded as constants: gradients
// flow through the network into the inputs but are never flushed into the
// parameter store. Used for inference and input attribution.
NodeId scoring_graph_const(Tape& tape, const ScoringModel& model, NodeId ft, NodeId x,
                           bool train_flag, Rng* dropout_rng, NodeId* h_out);

// Single-resume forward pass. Returns (score, 300-dim latent h).
std::pair<double, Tensor> forward(const ScoringModel& model, const Tensor& ft, const Tensor& x,
                                  bool train_flag, Rng* dropout_rng = nullptr);

// Inference over feature rows [begin, end); appends scores and optionally
// latent rows.
void infer_range(const ScoringModel& model, const FeatureSet& f, std::size_t begin,
                 std::size_t end, std::vector<double>* scores, Tensor* latents);
std::vector<double> infer_scores(const ScoringModel& model, const FeatureSet& f);
Tensor infer_latents(const ScoringModel& model, const FeatureSet& f);

// Per-batch callbacks used by the adversarial trainer. The default hooks do
// nothing, so plain training and hook-based training share one code path
// (and, with inert hooks, one bit-exact trajectory).
class TrainHooks {
public:
    virtual ~TrainHooks() = default;
    virtual void before_batch(ScoringModel& model, int epoch, int batch, const Tensor& ft_batch,
                              const std::vector<int>& gender_batch);
    virtual NodeId extend_loss(Tape& tape, ScoringModel& model, NodeId h, NodeId loss, int epoch,
                               int batch, const std::vector<int>& gender_batch);
    virtual void after_epoch(ScoringModel& model, int epoch);
};

std::vector<EpochStats> train_with_hooks(ScoringModel& model, const FeatureSet& train_f,
                                         const FeatureSet* val_f, const TrainConfig& config,
                                         TrainHooks* hooks);

// Mini-batch RMSE training on the selected target.
std::vector<EpochStats> train(ScoringModel& model, const ProfileSet& train_set,
                              const ProfileSet& val_set, const Embedder& embedder,
                              const TrainConfig& config);

// Inference-mode scores aligned with the input order.
std::vector<double> predict_scores(const ScoringModel& model, const Embedder& embedder,
                                   const ProfileSet& profiles);

// Versioned binary checkpoint (parameter name -> shape -> values, plus the
// embedder configuration).
void save_checkpoint(const ScoringModel& model, const std::string& path);
ScoringModel load_checkpoint(const std::string& path);

void save_history_csv(const std::vector<EpochStats>& history, const std::string& path);

}  // namespace fairpipe
