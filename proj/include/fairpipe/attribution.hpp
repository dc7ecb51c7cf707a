#pragma once

#include <array>
#include <functional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "fairpipe/lexicon.hpp"
#include "fairpipe/scoring.hpp"

namespace fairpipe {

struct IgResult {
    std::vector<double> token_attribution;  // per position, signed
    std::array<double, kNumCompetencies> competency_attribution{};
    double completeness_gap = 0.0;
    double f_input = 0.0;     // F(u)
    double f_baseline = 0.0;  // F(u')
};

struct AttributionConfig {
    int ig_steps = 50;
    int per_resume_k = 20;
    int per_group_k = 30;
    int iterations = 1;

    void validate() const;
};

// Midpoint-rule integrated gradients of the inference-mode score against
// the all-zero baseline (zero embedding rows, zero competencies). Token
// attribution is the signed sum over that token's embedding dims.
IgResult integrated_gradients(const ScoringModel& model, const Embedder& embedder,
                              const Profile& profile, int steps);

// Generic variant over a caller-supplied evaluator: given scaled inputs,
// returns F and writes dF/d(matrix) and dF/d(x). Used to check the IG
// axioms against functions with known closed-form attributions.
using IgEvaluator = std::function<double(const Tensor& m, const std::vector<std::uint8_t>& mask,
                                         const Tensor& x, Tensor* g_m, Tensor* g_x)>;
IgResult integrated_gradients_f(const IgEvaluator& f, const EmbeddingMatrix& input,
                                const Tensor& x, int steps);

struct GroupTokenSets {
    // [gender][sector] -> (token, resume count), count-descending.
    std::array<std::array<std::vector<std::pair<std::string, int>>, kNumSectors>, 2> sets;

    bool group_contains(int gender, int sector, const std::string& token) const;
    std::string to_json_string() const;
};

struct ResumeAttribution {
    std::int64_t id = 0;
    // (token, position, signed attribution), relevance-descending.
    std::vector<std::tuple<std::string, int, double>> top;
};

// Per-resume top-k relevance mining, aggregated per (gender, sector) with
// stopword/verb/adverb tokens filtered out.
GroupTokenSets mine_group_tokens(const ScoringModel& model, const Embedder& embedder,
                                 const ProfileSet& validation, int per_resume_k, int per_group_k,
                                 const Lexicon& lexicon, int ig_steps = 50,
                                 std::vector<ResumeAttribution>* per_resume = nullptr);

struct MaskList {
    std::set<std::string> tokens;

    std::string to_text() const;  // one token per line
    static MaskList from_text(const std::string& text);
};

// Union of the group-set tokens and every name token in the lexicon.
MaskList build_mask_list(const GroupTokenSets& sets, const Lexicon& lexicon);

// Replaces every occurrence of a mask-list token and every name-tagged
// token with "[MASK]". Sequence lengths are unchanged; idempotent.
ProfileSet apply_mask(const ProfileSet& dataset, const MaskList& mask, const Lexicon& lexicon);

struct AttributionReport {
    GroupTokenSets sets;
    MaskList mask;
    std::vector<ResumeAttribution> resumes;
};

struct MitigationResult {
    ScoringModel model;  // final retrained model
    MaskList mask;
    AttributionReport report;
    ProfileSet masked_train;
    ProfileSet masked_val;
    std::vector<EpochStats> baseline_history;
    std::vector<EpochStats> final_history;
};

// Detect-mask-retrain loop: train on biased scores, mine proxy tokens via
// IG, extend the mask list, re-mask, retrain. iterations = 0 returns the
// baseline biased model with an empty mask. A caller that already trained
// the biased baseline under the same configuration can pass it to skip the
// first training run.
MitigationResult mitigate_via_explainability(const ProfileSet& train_set,
                                             const ProfileSet& val_set, const Lexicon& lexicon,
                                             const EmbedderConfig& embedder_config,
                                             const TrainConfig& train_config,
                                             const AttributionConfig& attribution_config,
                                             const ScoringModel* pretrained_baseline = nullptr);

void save_resume_attributions_csv(const std::vector<ResumeAttribution>& rows,
                                  const std::string& path);

}  // namespace fairpipe
