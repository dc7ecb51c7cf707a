#include "fairpipe/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include "fairpipe/errors.hpp"
#include "fairpipe/rng.hpp"

namespace fairpipe {

namespace {

constexpr char kCkptMagic[8] = {'F', 'P', 'C', 'K', '0', '0', '0', '1'};
constexpr std::size_t kInferChunk = 2048;

Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t = Tensor::zeros({fan_in, fan_out});
    for (double& v : t.data) v = rng.uniform(-limit, limit);
    return t;
}

double rmse_of(const std::vector<double>& pred, const std::vector<double>& target) {
    double sq = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        sq += d * d;
    }
    return std::sqrt(sq / static_cast<double>(pred.size()));
}

template <typename T>
void write_raw(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in, const char* what) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw IoError(std::string("checkpoint truncated while reading ") + what);
    return v;
}

void write_string(std::ostream& out, const std::string& s) {
    write_raw<std::uint64_t>(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in, const char* what) {
    const auto len = read_raw<std::uint64_t>(in, what);
    std::string s(len, '\0');
    in.read(s.data(), static_cast<std::streamsize>(len));
    if (!in) throw IoError(std::string("checkpoint truncated while reading ") + what);
    return s;
}

}  // namespace

std::string to_string(TrainTarget t) { return t == TrainTarget::blind ? "blind" : "biased"; }

TrainTarget train_target_from_string(const std::string& s) {
    if (s == "blind") return TrainTarget::blind;
    if (s == "biased") return TrainTarget::biased;
    throw ConfigError("unknown training target '" + s + "'");
}

ScoringModel ScoringModel::init(std::size_t embed_dim, const EmbedderConfig& embedder,
                                std::uint64_t seed) {
    if (embed_dim == 0) throw ConfigError("embed_dim must be positive");
    ScoringModel m;
    m.embed_dim = embed_dim;
    m.embedder = embedder;
    auto init_pair = [&](const std::string& w, const std::string& b, std::size_t in,
                         std::size_t out) {
        Rng rng(derive_seed(seed, "init", hash_token(w)));
        m.params.add(w, xavier_uniform(in, out, rng));
        m.params.add(b, Tensor::zeros({out}));
    };
    init_pair("w1", "b1", embed_dim, kLatentDim);
    init_pair("w2", "b2", kLatentDim, kHidden2Dim);
    init_pair("w3", "b3", kHidden2Dim + kNumCompetencies, 1);
    return m;
}

void TrainConfig::validate() const {
    if (epochs < 0) throw ConfigError("epochs must be non-negative");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (lr < 0.0) throw ConfigError("lr must be non-negative");
}

FeatureSet compute_features(const ProfileSet& profiles, const Embedder& embedder) {
    if (profiles.empty()) throw DataError("profile set is empty");
    const std::size_t n = profiles.size();
    const std::size_t dim = embedder.dim();
    FeatureSet f;
    f.ft = Tensor::zeros({n, dim});
    f.x = Tensor::zeros({n, kNumCompetencies});
    f.blind.resize(n);
    f.biased.resize(n);
    f.gender.resize(n);
    f.ids.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Profile& p = profiles[i];
        const Tensor pooled = pool_mean(embedder.embed(p.bio, p.id));
        std::copy(pooled.data.begin(), pooled.data.end(),
                  f.ft.data.begin() + static_cast<std::ptrdiff_t>(i * dim));
        for (std::size_t c = 0; c < kNumCompetencies; ++c) {
            f.x.data[i * kNumCompetencies + c] = p.competencies[c];
        }
        f.blind[i] = p.blind_score;
        f.biased[i] = p.biased_score;
        f.gender[i] = p.gender;
        f.ids[i] = p.id;
    }
    return f;
}

namespace {

struct GraphParams {
    NodeId w1, b1, w2, b2, w3, b3;
};

NodeId scoring_graph_nodes(Tape& tape, double dropout_rate, const GraphParams& p, NodeId ft,
                           NodeId x, bool train_flag, Rng* dropout_rng, NodeId* h_out) {
    if (train_flag && dropout_rng == nullptr) {
        throw StateError("scoring forward: training mode requires a dropout rng");
    }
    const NodeId h = tape.sigmoid(tape.affine(ft, p.w1, p.b1));
    if (h_out != nullptr) *h_out = h;
    Rng unused(0);
    const NodeId hd = tape.dropout(h, dropout_rate, train_flag ? *dropout_rng : unused,
                                   train_flag);
    const NodeId h2 = tape.sigmoid(tape.affine(hd, p.w2, p.b2));
    const NodeId cat = tape.concat(h2, x);
    return tape.sigmoid(tape.affine(cat, p.w3, p.b3));
}

}  // namespace

NodeId scoring_graph(Tape& tape, ScoringModel& model, NodeId ft, NodeId x, bool train_flag,
                     Rng* dropout_rng, NodeId* h_out) {
    const GraphParams p{tape.param(model.params, "w1"), tape.param(model.params, "b1"),
                        tape.param(model.params, "w2"), tape.param(model.params, "b2"),
                        tape.param(model.params, "w3"), tape.param(model.params, "b3")};
    return scoring_graph_nodes(tape, model.dropout_rate, p, ft, x, train_flag, dropout_rng,
                               h_out);
}

NodeId scoring_graph_const(Tape& tape, const ScoringModel& model, NodeId ft, NodeId x,
                           bool train_flag, Rng* dropout_rng, NodeId* h_out) {
    const GraphParams p{
        tape.input(model.params.value("w1")), tape.input(model.params.value("b1")),
        tape.input(model.params.value("w2")), tape.input(model.params.value("b2")),
        tape.input(model.params.value("w3")), tape.input(model.params.value("b3"))};
    return scoring_graph_nodes(tape, model.dropout_rate, p, ft, x, train_flag, dropout_rng,
                               h_out);
}

std::pair<double, Tensor> forward(const ScoringModel& model, const Tensor& ft, const Tensor& x,
                                  bool train_flag, Rng* dropout_rng) {
    if (ft.numel() != model.embed_dim) {
        throw ShapeError("forward: text feature has " + std::to_string(ft.numel()) +
                         " dims, model expects " + std::to_string(model.embed_dim));
    }
    if (x.numel() != kNumCompetencies) {
        throw ShapeError("forward: competency vector must have 7 entries");
    }
    Tape tape;
    const NodeId ftn = tape.input(ft.reshaped({1, model.embed_dim}));
    const NodeId xn = tape.input(x.reshaped({1, kNumCompetencies}));
    NodeId h = -1;
    const NodeId yhat = scoring_graph_const(tape, model, ftn, xn, train_flag, dropout_rng, &h);
    return {tape.value(yhat).data[0], tape.value(h).reshaped({kLatentDim})};
}

void infer_range(const ScoringModel& model, const FeatureSet& f, std::size_t begin,
                 std::size_t end, std::vector<double>* scores, Tensor* latents) {
    const std::size_t dim = model.embed_dim;
    if (f.ft.cols() != dim) {
        throw ConfigError("feature dim " + std::to_string(f.ft.cols()) +
                          " does not match checkpoint dim " + std::to_string(dim));
    }
    for (std::size_t off = begin; off < end; off += kInferChunk) {
        const std::size_t hi = std::min(end, off + kInferChunk);
        const std::size_t rows = hi - off;
        Tensor ft_chunk = Tensor::zeros({rows, dim});
        Tensor x_chunk = Tensor::zeros({rows, kNumCompetencies});
        std::copy(f.ft.data.begin() + static_cast<std::ptrdiff_t>(off * dim),
                  f.ft.data.begin() + static_cast<std::ptrdiff_t>(hi * dim),
                  ft_chunk.data.begin());
        std::copy(f.x.data.begin() + static_cast<std::ptrdiff_t>(off * kNumCompetencies),
                  f.x.data.begin() + static_cast<std::ptrdiff_t>(hi * kNumCompetencies),
                  x_chunk.data.begin());
        Tape tape;
        const NodeId ftn = tape.input(std::move(ft_chunk));
        const NodeId xn = tape.input(std::move(x_chunk));
        NodeId h = -1;
        const NodeId yhat = scoring_graph_const(tape, model, ftn, xn, false, nullptr, &h);
        if (scores != nullptr) {
            const Tensor& y = tape.value(yhat);
            scores->insert(scores->end(), y.data.begin(), y.data.end());
        }
        if (latents != nullptr) {
            const Tensor& hv = tape.value(h);
            latents->data.insert(latents->data.end(), hv.data.begin(), hv.data.end());
        }
    }
    if (latents != nullptr) {
        latents->shape = {latents->data.size() / kLatentDim, kLatentDim};
    }
}

std::vector<double> infer_scores(const ScoringModel& model, const FeatureSet& f) {
    std::vector<double> scores;
    scores.reserve(f.size());
    infer_range(model, f, 0, f.size(), &scores, nullptr);
    return scores;
}

Tensor infer_latents(const ScoringModel& model, const FeatureSet& f) {
    Tensor latents;
    infer_range(model, f, 0, f.size(), nullptr, &latents);
    return latents;
}

void TrainHooks::before_batch(ScoringModel&, int, int, const Tensor&, const std::vector<int>&) {}
NodeId TrainHooks::extend_loss(Tape&, ScoringModel&, NodeId, NodeId loss, int, int,
                               const std::vector<int>&) {
    return loss;
}
void TrainHooks::after_epoch(ScoringModel&, int) {}

std::vector<EpochStats> train_with_hooks(ScoringModel& model, const FeatureSet& train_f,
                                         const FeatureSet* val_f, const TrainConfig& config,
                                         TrainHooks* hooks) {
    config.validate();
    if (train_f.size() == 0) throw DataError("train set is empty");
    TrainHooks default_hooks;
    if (hooks == nullptr) hooks = &default_hooks;

    const std::size_t n = train_f.size();
    const std::size_t dim = model.embed_dim;
    const std::vector<double>& target = train_f.target(config.target);
    std::vector<EpochStats> history;
    history.reserve(static_cast<std::size_t>(config.epochs));

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(derive_seed(config.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        const int n_batches = static_cast<int>((n + config.batch_size - 1) / config.batch_size);
        for (int batch = 0; batch < n_batches; ++batch) {
            const std::size_t lo = static_cast<std::size_t>(batch) * config.batch_size;
            const std::size_t hi = std::min(n, lo + config.batch_size);
            const std::size_t rows = hi - lo;
            Tensor ft_b = Tensor::zeros({rows, dim});
            Tensor x_b = Tensor::zeros({rows, kNumCompetencies});
            Tensor t_b = Tensor::zeros({rows, 1});
            std::vector<int> gender_b(rows);
            for (std::size_t r = 0; r < rows; ++r) {
                const std::size_t src = order[lo + r];
                std::copy(train_f.ft.data.begin() + static_cast<std::ptrdiff_t>(src * dim),
                          train_f.ft.data.begin() + static_cast<std::ptrdiff_t>((src + 1) * dim),
                          ft_b.data.begin() + static_cast<std::ptrdiff_t>(r * dim));
                std::copy(
                    train_f.x.data.begin() + static_cast<std::ptrdiff_t>(src * kNumCompetencies),
                    train_f.x.data.begin() +
                        static_cast<std::ptrdiff_t>((src + 1) * kNumCompetencies),
                    x_b.data.begin() + static_cast<std::ptrdiff_t>(r * kNumCompetencies));
                t_b.data[r] = target[src];
                gender_b[r] = train_f.gender[src];
            }

            hooks->before_batch(model, epoch, batch, ft_b, gender_b);

            Tape tape;
            const NodeId ftn = tape.input(std::move(ft_b));
            const NodeId xn = tape.input(std::move(x_b));
            Rng dropout_rng(derive_seed(config.seed, "dropout",
                                        static_cast<std::uint64_t>(epoch),
                                        static_cast<std::uint64_t>(batch), 1));
            NodeId h = -1;
            const NodeId yhat = scoring_graph(tape, model, ftn, xn, true, &dropout_rng, &h);
            const NodeId tn = tape.input(std::move(t_b));
            NodeId loss = tape.rmse_loss(yhat, tn);
            loss = hooks->extend_loss(tape, model, h, loss, epoch, batch, gender_b);
            tape.backward(loss);
            if (config.lr == 0.0) {
                model.params.zero_grads();  // a zero learning rate disables stepping
            } else {
                model.params.step_adamw(config.adamw());
            }
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_rmse = rmse_of(infer_scores(model, train_f), target);
        stats.val_rmse =
            val_f != nullptr && val_f->size() > 0
                ? rmse_of(infer_scores(model, *val_f), val_f->target(config.target))
                : std::numeric_limits<double>::quiet_NaN();
        history.push_back(stats);
        hooks->after_epoch(model, epoch);
    }
    return history;
}

std::vector<EpochStats> train(ScoringModel& model, const ProfileSet& train_set,
                              const ProfileSet& val_set, const Embedder& embedder,
                              const TrainConfig& config) {
    if (train_set.empty()) throw DataError("train set is empty");
    const FeatureSet train_f = compute_features(train_set, embedder);
    FeatureSet val_f;
    const FeatureSet* val_ptr = nullptr;
    if (!val_set.empty()) {
        val_f = compute_features(val_set, embedder);
        val_ptr = &val_f;
    }
    return train_with_hooks(model, train_f, val_ptr, config, nullptr);
}

std::vector<double> predict_scores(const ScoringModel& model, const Embedder& embedder,
                                   const ProfileSet& profiles) {
    if (embedder.dim() != model.embed_dim) {
        throw ConfigError("embedder dim " + std::to_string(embedder.dim()) +
                          " does not match checkpoint dim " + std::to_string(model.embed_dim));
    }
    const FeatureSet f = compute_features(profiles, embedder);
    return infer_scores(model, f);
}

void save_checkpoint(const ScoringModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint '" + path + "'");
    out.write(kCkptMagic, 8);
    write_raw<std::uint64_t>(out, model.embed_dim);
    write_raw<std::uint8_t>(out, model.embedder.kind == EmbedderKind::hashing ? 0 : 1);
    write_raw<std::uint64_t>(out, model.embedder.dim);
    write_raw<std::uint64_t>(out, model.embedder.seed);
    write_string(out, model.embedder.path);
    write_raw<double>(out, model.dropout_rate);
    write_raw<std::uint64_t>(out, model.params.size());
    for (const auto& [name, entry] : model.params.entries()) {
        write_string(out, name);
        write_raw<std::uint64_t>(out, entry.value.shape.size());
        for (const auto d : entry.value.shape) write_raw<std::uint64_t>(out, d);
        out.write(reinterpret_cast<const char*>(entry.value.data.data()),
                  static_cast<std::streamsize>(entry.value.data.size() * sizeof(double)));
    }
    if (!out) throw IoError("failed writing checkpoint '" + path + "'");
}

ScoringModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path + "'");
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCkptMagic, 8) != 0) {
        throw IoError("'" + path + "' is not a fairpipe checkpoint");
    }
    ScoringModel m;
    m.embed_dim = read_raw<std::uint64_t>(in, "embed_dim");
    m.embedder.kind =
        read_raw<std::uint8_t>(in, "embedder kind") == 0 ? EmbedderKind::hashing
                                                         : EmbedderKind::precomputed;
    m.embedder.dim = read_raw<std::uint64_t>(in, "embedder dim");
    m.embedder.seed = read_raw<std::uint64_t>(in, "embedder seed");
    m.embedder.path = read_string(in, "embedder path");
    m.dropout_rate = read_raw<double>(in, "dropout rate");
    const auto count = read_raw<std::uint64_t>(in, "param count");
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::string name = read_string(in, "param name");
        const auto ndim = read_raw<std::uint64_t>(in, "param rank");
        std::vector<std::size_t> shape;
        for (std::uint64_t d = 0; d < ndim; ++d) {
            shape.push_back(read_raw<std::uint64_t>(in, "param dim"));
        }
        Tensor t = Tensor::zeros(shape);
        in.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        if (!in) throw IoError("checkpoint truncated in parameter data");
        m.params.add(name, std::move(t));
    }
    return m;
}

void save_history_csv(const std::vector<EpochStats>& history, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write history '" + path + "'");
    out << "epoch,train_rmse,val_rmse\n";
    char buf[128];
    for (const auto& row : history) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", row.epoch, row.train_rmse,
                      row.val_rmse);
        out << buf;
    }
}

}  // namespace fairpipe
