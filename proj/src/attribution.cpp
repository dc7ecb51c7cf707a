#include "fairpipe/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <map>
#include <numeric>
#include <sstream>

#include "fairpipe/errors.hpp"

namespace fairpipe {

namespace {

using nlohmann::json;

std::size_t count_unmasked(const std::vector<std::uint8_t>& mask) {
    std::size_t k = 0;
    for (const auto f : mask) k += f ? 1 : 0;
    return k;
}

double eval_score(const ScoringModel& model, const Tensor& ft, const Tensor& x) {
    Tape tape;
    const NodeId ftn = tape.input(ft.reshaped({1, ft.numel()}));
    const NodeId xn = tape.input(x.reshaped({1, x.numel()}));
    const NodeId yhat = scoring_graph_const(tape, model, ftn, xn, false, nullptr, nullptr);
    return tape.value(yhat).data[0];
}

IgResult finish_ig(const EmbeddingMatrix& input, const Tensor& x, const Tensor& g_ft_or_m,
                   const Tensor& g_x, bool g_is_pooled, double f_input, double f_baseline) {
    const std::size_t tau = input.values.rows();
    const std::size_t dim = input.values.cols();
    IgResult out;
    out.token_attribution.assign(tau, 0.0);
    double total = 0.0;
    if (g_is_pooled) {
        // Pooling is linear, so the averaged score gradient w.r.t. the
        // pooled feature distributes uniformly over unmasked rows.
        const double inv_k = 1.0 / static_cast<double>(count_unmasked(input.row_mask));
        for (std::size_t r = 0; r < tau; ++r) {
            if (!input.row_mask[r]) continue;
            double acc = 0.0;
            for (std::size_t c = 0; c < dim; ++c) {
                acc += input.values.data[r * dim + c] * g_ft_or_m.data[c] * inv_k;
            }
            out.token_attribution[r] = acc;
            total += acc;
        }
    } else {
        for (std::size_t r = 0; r < tau; ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < dim; ++c) {
                acc += input.values.data[r * dim + c] * g_ft_or_m.data[r * dim + c];
            }
            out.token_attribution[r] = acc;
            total += acc;
        }
    }
    for (std::size_t c = 0; c < kNumCompetencies; ++c) {
        out.competency_attribution[c] = x.data[c] * g_x.data[c];
        total += out.competency_attribution[c];
    }
    out.f_input = f_input;
    out.f_baseline = f_baseline;
    out.completeness_gap = std::abs(total - (f_input - f_baseline));
    return out;
}

}  // namespace

void AttributionConfig::validate() const {
    if (ig_steps < 2) throw ConfigError("ig_steps must be at least 2");
    if (per_resume_k <= 0 || per_group_k <= 0) {
        throw ConfigError("per_resume_k and per_group_k must be positive");
    }
    if (iterations < 0) throw ConfigError("iterations must be non-negative");
}

IgResult integrated_gradients(const ScoringModel& model, const Embedder& embedder,
                              const Profile& profile, int steps) {
    if (steps < 2) throw ConfigError("integrated_gradients: steps must be at least 2");
    if (embedder.dim() != model.embed_dim) {
        throw ConfigError("embedder dim does not match checkpoint dim");
    }
    const EmbeddingMatrix input = embedder.embed(profile.bio, profile.id);
    const Tensor pooled = pool_mean(input);
    const Tensor x = Tensor::from_vector(
        std::vector<double>(profile.competencies.begin(), profile.competencies.end()));

    // All interpolation points share one graph: row k holds the midpoint
    // ((k + 0.5) / m) * (f^t, x), and averaging the m scores with mean_rows
    // folds the 1/m quadrature weight into the row gradients.
    const auto m = static_cast<std::size_t>(steps);
    const std::size_t dim = model.embed_dim;
    Tensor ft_steps = Tensor::zeros({m, dim});
    Tensor x_steps = Tensor::zeros({m, kNumCompetencies});
    for (std::size_t k = 0; k < m; ++k) {
        const double alpha = (static_cast<double>(k) + 0.5) / static_cast<double>(m);
        for (std::size_t c = 0; c < dim; ++c) ft_steps.data[k * dim + c] = alpha * pooled.data[c];
        for (std::size_t c = 0; c < kNumCompetencies; ++c) {
            x_steps.data[k * kNumCompetencies + c] = alpha * x.data[c];
        }
    }
    Tape tape;
    const NodeId ftn = tape.input(std::move(ft_steps));
    const NodeId xn = tape.input(std::move(x_steps));
    const NodeId yhat = scoring_graph_const(tape, model, ftn, xn, false, nullptr, nullptr);
    const NodeId mean = tape.mean_rows(yhat, std::vector<std::uint8_t>(m, 1));
    tape.backward(mean);

    const Tensor& g_ft_steps = tape.grad(ftn);
    const Tensor& g_x_steps = tape.grad(xn);
    Tensor g_ft = Tensor::zeros({dim});
    Tensor g_x = Tensor::zeros({kNumCompetencies});
    for (std::size_t k = 0; k < m; ++k) {
        for (std::size_t c = 0; c < dim; ++c) g_ft.data[c] += g_ft_steps.data[k * dim + c];
        for (std::size_t c = 0; c < kNumCompetencies; ++c) {
            g_x.data[c] += g_x_steps.data[k * kNumCompetencies + c];
        }
    }

    const double f_input = eval_score(model, pooled, x);
    const double f_baseline =
        eval_score(model, Tensor::zeros({dim}), Tensor::zeros({kNumCompetencies}));
    return finish_ig(input, x, g_ft, g_x, true, f_input, f_baseline);
}

IgResult integrated_gradients_f(const IgEvaluator& f, const EmbeddingMatrix& input,
                                const Tensor& x, int steps) {
    if (steps < 2) throw ConfigError("integrated_gradients: steps must be at least 2");
    if (x.numel() != kNumCompetencies) {
        throw ShapeError("integrated_gradients: competency vector must have 7 entries");
    }
    const std::size_t tau = input.values.rows();
    const std::size_t dim = input.values.cols();
    Tensor g_m_acc = Tensor::zeros({tau, dim});
    Tensor g_x_acc = Tensor::zeros({kNumCompetencies});
    const auto m = static_cast<std::size_t>(steps);
    for (std::size_t k = 0; k < m; ++k) {
        const double alpha = (static_cast<double>(k) + 0.5) / static_cast<double>(m);
        Tensor m_scaled = input.values;
        for (double& v : m_scaled.data) v *= alpha;
        Tensor x_scaled = x;
        for (double& v : x_scaled.data) v *= alpha;
        Tensor g_m = Tensor::zeros({tau, dim});
        Tensor g_x = Tensor::zeros({kNumCompetencies});
        f(m_scaled, input.row_mask, x_scaled, &g_m, &g_x);
        for (std::size_t i = 0; i < g_m.numel(); ++i) g_m_acc.data[i] += g_m.data[i];
        for (std::size_t i = 0; i < g_x.numel(); ++i) g_x_acc.data[i] += g_x.data[i];
    }
    const double inv_m = 1.0 / static_cast<double>(m);
    for (double& v : g_m_acc.data) v *= inv_m;
    for (double& v : g_x_acc.data) v *= inv_m;

    const double f_input = f(input.values, input.row_mask, x, nullptr, nullptr);
    const double f_baseline = f(Tensor::zeros({tau, dim}), input.row_mask,
                                Tensor::zeros({kNumCompetencies}), nullptr, nullptr);
    return finish_ig(input, x, g_m_acc, g_x_acc, false, f_input, f_baseline);
}

bool GroupTokenSets::group_contains(int gender, int sector, const std::string& token) const {
    for (const auto& [t, count] : sets[static_cast<std::size_t>(gender)]
                                      [static_cast<std::size_t>(sector)]) {
        if (t == token) return true;
    }
    return false;
}

std::string GroupTokenSets::to_json_string() const {
    static const char* kSectorNames[kNumSectors] = {"education", "healthcare", "jurisdiction",
                                                    "technology"};
    json doc;
    for (int g = 0; g < 2; ++g) {
        for (int s = 0; s < kNumSectors; ++s) {
            json arr = json::array();
            for (const auto& [token, count] : sets[g][s]) {
                arr.push_back({{"token", token}, {"count", count}});
            }
            doc[g == 0 ? "male" : "female"][kSectorNames[s]] = arr;
        }
    }
    return doc.dump(2) + "\n";
}

GroupTokenSets mine_group_tokens(const ScoringModel& model, const Embedder& embedder,
                                 const ProfileSet& validation, int per_resume_k, int per_group_k,
                                 const Lexicon& lexicon, int ig_steps,
                                 std::vector<ResumeAttribution>* per_resume) {
    if (validation.empty()) throw DataError("mine_group_tokens: validation set is empty");
    if (per_resume_k <= 0 || per_group_k <= 0) {
        throw ConfigError("mine_group_tokens: k values must be positive");
    }
    std::array<std::array<std::map<std::string, int>, kNumSectors>, 2> counts;
    for (const Profile& p : validation) {
        const IgResult ig = integrated_gradients(model, embedder, p, ig_steps);
        const std::size_t tau = ig.token_attribution.size();
        std::vector<std::size_t> order(tau);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return std::abs(ig.token_attribution[a]) > std::abs(ig.token_attribution[b]);
        });
        std::set<std::string> seen;
        ResumeAttribution row;
        row.id = p.id;
        for (std::size_t rank = 0;
             rank < std::min(tau, static_cast<std::size_t>(per_resume_k)); ++rank) {
            const std::size_t pos = order[rank];
            const std::string& token = p.bio.tokens[pos];
            if (token == kPadToken || token == kMaskToken) continue;
            row.top.emplace_back(token, static_cast<int>(pos), ig.token_attribution[pos]);
            if (seen.insert(token).second) {
                counts[static_cast<std::size_t>(p.gender)]
                      [static_cast<std::size_t>(p.sector)][token] += 1;
            }
        }
        if (per_resume != nullptr) per_resume->push_back(std::move(row));
    }

    GroupTokenSets out;
    for (int g = 0; g < 2; ++g) {
        for (int s = 0; s < kNumSectors; ++s) {
            std::vector<std::pair<std::string, int>> ranked;
            for (const auto& [token, count] : counts[g][s]) {
                const TokenTag tag = lexicon.entry(token).tag;
                if (tag == TokenTag::stopword || tag == TokenTag::verb ||
                    tag == TokenTag::adverb) {
                    continue;
                }
                ranked.emplace_back(token, count);
            }
            std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
                if (a.second != b.second) return a.second > b.second;
                return a.first < b.first;
            });
            if (ranked.size() > static_cast<std::size_t>(per_group_k)) {
                ranked.resize(static_cast<std::size_t>(per_group_k));
            }
            out.sets[g][s] = std::move(ranked);
        }
    }
    return out;
}

std::string MaskList::to_text() const {
    std::ostringstream os;
    for (const auto& t : tokens) os << t << "\n";
    return os.str();
}

MaskList MaskList::from_text(const std::string& text) {
    MaskList m;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty()) m.tokens.insert(line);
    }
    return m;
}

MaskList build_mask_list(const GroupTokenSets& sets, const Lexicon& lexicon) {
    MaskList mask;
    for (int g = 0; g < 2; ++g) {
        for (int s = 0; s < kNumSectors; ++s) {
            for (const auto& [token, count] : sets.sets[g][s]) {
                if (!lexicon.contains(token)) {
                    throw LexiconError("mask-list token '" + token + "' not in lexicon");
                }
                mask.tokens.insert(token);
            }
        }
    }
    for (const auto& name : lexicon.tokens_with_tag(TokenTag::name)) mask.tokens.insert(name);
    mask.tokens.erase(kPadToken);
    mask.tokens.erase(kMaskToken);
    return mask;
}

ProfileSet apply_mask(const ProfileSet& dataset, const MaskList& mask, const Lexicon& lexicon) {
    ProfileSet out = dataset;
    for (Profile& p : out) {
        for (std::string& token : p.bio.tokens) {
            if (token == kPadToken || token == kMaskToken) continue;
            const bool listed = mask.tokens.count(token) != 0;
            const bool is_name = lexicon.contains(token) &&
                                 lexicon.entry(token).tag == TokenTag::name;
            if (listed || is_name) token = kMaskToken;
        }
    }
    return out;
}

MitigationResult mitigate_via_explainability(const ProfileSet& train_set,
                                             const ProfileSet& val_set, const Lexicon& lexicon,
                                             const EmbedderConfig& embedder_config,
                                             const TrainConfig& train_config,
                                             const AttributionConfig& attribution_config,
                                             const ScoringModel* pretrained_baseline) {
    attribution_config.validate();
    if (train_config.target != TrainTarget::biased) {
        throw ConfigError("mitigate_via_explainability expects the biased training target");
    }
    const auto embedder = Embedder::create(embedder_config);

    MitigationResult result;
    if (pretrained_baseline != nullptr) {
        result.model = *pretrained_baseline;
    } else {
        result.model = ScoringModel::init(embedder->dim(), embedder_config, train_config.seed);
        result.baseline_history =
            train(result.model, train_set, val_set, *embedder, train_config);
    }
    result.final_history = result.baseline_history;
    result.masked_train = train_set;
    result.masked_val = val_set;

    for (int iter = 0; iter < attribution_config.iterations; ++iter) {
        std::vector<ResumeAttribution> per_resume;
        const GroupTokenSets sets = mine_group_tokens(
            result.model, *embedder, result.masked_val, attribution_config.per_resume_k,
            attribution_config.per_group_k, lexicon, attribution_config.ig_steps, &per_resume);
        const MaskList extension = build_mask_list(sets, lexicon);
        result.mask.tokens.insert(extension.tokens.begin(), extension.tokens.end());
        result.masked_train = apply_mask(train_set, result.mask, lexicon);
        result.masked_val = apply_mask(val_set, result.mask, lexicon);

        result.model = ScoringModel::init(embedder->dim(), embedder_config, train_config.seed);
        result.final_history = train(result.model, result.masked_train, result.masked_val,
                                     *embedder, train_config);
        result.report.sets = sets;
        result.report.mask = result.mask;
        result.report.resumes = std::move(per_resume);
    }
    return result;
}

void save_resume_attributions_csv(const std::vector<ResumeAttribution>& rows,
                                  const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write attribution csv '" + path + "'");
    out << "id,token,position,attribution\n";
    char buf[256];
    for (const auto& row : rows) {
        for (const auto& [token, pos, attr] : row.top) {
            std::snprintf(buf, sizeof(buf), "%lld,%s,%d,%.17g\n",
                          static_cast<long long>(row.id), token.c_str(), pos, attr);
            out << buf;
        }
    }
}

}  // namespace fairpipe
