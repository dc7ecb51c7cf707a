#include "fairpipe/adversarial.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include "fairpipe/errors.hpp"

namespace fairpipe {

namespace {

constexpr std::size_t kChunk = 2048;

Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t = Tensor::zeros({fan_in, fan_out});
    for (double& v : t.data) v = rng.uniform(-limit, limit);
    return t;
}

void require_both_genders(const std::vector<int>& genders, const char* what) {
    bool has[2] = {false, false};
    for (const int g : genders) {
        if (g != 0 && g != 1) throw DataError(std::string(what) + ": gender labels must be 0/1");
        has[g] = true;
    }
    if (!has[0] || !has[1]) {
        throw DataError(std::string(what) + ": both gender labels must be present");
    }
}

Tensor gather_rows(const Tensor& src, const std::vector<std::size_t>& idx, std::size_t lo,
                   std::size_t hi) {
    const std::size_t cols = src.cols();
    Tensor out = Tensor::zeros({hi - lo, cols});
    for (std::size_t r = lo; r < hi; ++r) {
        std::copy(src.data.begin() + static_cast<std::ptrdiff_t>(idx[r] * cols),
                  src.data.begin() + static_cast<std::ptrdiff_t>((idx[r] + 1) * cols),
                  out.data.begin() + static_cast<std::ptrdiff_t>((r - lo) * cols));
    }
    return out;
}

// Min-max phases wired into the shared training loop.
class AdversarialHooks : public TrainHooks {
public:
    AdversarialHooks(AdversaryHead& adversary, const AdversarialConfig& config,
                     const FeatureSet& train_f, const FeatureSet* val_f,
                     std::vector<AdvEpochStats>& out)
        : adversary_(adversary), config_(config), train_f_(train_f), val_f_(val_f), out_(out) {}

    void before_batch(ScoringModel& model, int epoch, int batch, const Tensor& ft_batch,
                      const std::vector<int>& gender_batch) override {
        // Phase A: one adversary step on CE(q, z); the latent is computed
        // from the current fusion weights as constants, so no gradient
        // reaches the scoring parameters.
        Tape tape;
        const NodeId ftn = tape.input(ft_batch);
        const NodeId w1 = tape.input(model.params.value("w1"));
        const NodeId b1 = tape.input(model.params.value("b1"));
        const NodeId h = tape.sigmoid(tape.affine(ftn, w1, b1));
        Rng dropout_rng(derive_seed(config_.train.seed, "adv-dropout",
                                    static_cast<std::uint64_t>(epoch),
                                    static_cast<std::uint64_t>(batch), 1));
        const NodeId q = adversary_graph(tape, adversary_, h, true, &dropout_rng);
        const NodeId ce = tape.cross_entropy(q, gender_batch);
        tape.backward(ce);
        adversary_.params.step_adamw(config_.train.adamw());
    }

    NodeId extend_loss(Tape& tape, ScoringModel&, NodeId h, NodeId loss, int, int,
                       const std::vector<int>& gender_batch) override {
        // Phase B additions. Skipped entirely when both terms vanish so the
        // recorded graph matches plain training op for op.
        if (config_.lambda == 0.0 && config_.mu == 0.0) return loss;
        const NodeId q = adversary_graph_const(tape, adversary_, h);
        NodeId total = loss;
        if (config_.lambda != 0.0) {
            total = tape.add(total, tape.scale(tape.neg_entropy(q), config_.lambda));
        }
        if (config_.mu != 0.0) {
            total = tape.add(total, tape.scale(tape.cross_entropy(q, gender_batch), -config_.mu));
        }
        return total;
    }

    void after_epoch(ScoringModel& model, int epoch) override {
        AdvEpochStats stats;
        stats.epoch = epoch;
        stats.adv_train_acc = adversary_accuracy(adversary_, infer_latents(model, train_f_),
                                                 train_f_.gender);
        stats.adv_val_acc = val_f_ != nullptr
                                ? adversary_accuracy(adversary_, infer_latents(model, *val_f_),
                                                     val_f_->gender)
                                : std::numeric_limits<double>::quiet_NaN();
        out_.push_back(stats);
    }

private:
    AdversaryHead& adversary_;
    const AdversarialConfig& config_;
    const FeatureSet& train_f_;
    const FeatureSet* val_f_;
    std::vector<AdvEpochStats>& out_;
};

}  // namespace

AdversaryHead AdversaryHead::init(std::uint64_t seed) {
    AdversaryHead a;
    auto init_pair = [&](const std::string& w, const std::string& b, std::size_t in,
                         std::size_t out) {
        Rng rng(derive_seed(seed, "adv_init", hash_token(w)));
        a.params.add(w, xavier_uniform(in, out, rng));
        a.params.add(b, Tensor::zeros({out}));
    };
    init_pair("aw1", "ab1", kLatentDim, kHidden2Dim);
    init_pair("aw2", "ab2", kHidden2Dim, 2);
    return a;
}

void AdversarialConfig::validate() const {
    train.validate();
    if (lambda < 0.0) throw ConfigError("lambda must be non-negative");
    if (!std::isfinite(mu)) throw ConfigError("mu must be finite");
}

NodeId adversary_graph(Tape& tape, AdversaryHead& adversary, NodeId h, bool train_flag,
                       Rng* dropout_rng) {
    if (train_flag && dropout_rng == nullptr) {
        throw StateError("adversary_graph: training forward requires a dropout rng");
    }
    const NodeId w1 = tape.param(adversary.params, "aw1");
    const NodeId b1 = tape.param(adversary.params, "ab1");
    const NodeId w2 = tape.param(adversary.params, "aw2");
    const NodeId b2 = tape.param(adversary.params, "ab2");
    const NodeId hidden = tape.sigmoid(tape.affine(h, w1, b1));
    Rng unused(0);
    const NodeId hd = tape.dropout(hidden, adversary.dropout_rate,
                                   train_flag ? *dropout_rng : unused, train_flag);
    return tape.softmax(tape.affine(hd, w2, b2));
}

NodeId adversary_graph_const(Tape& tape, const AdversaryHead& adversary, NodeId h) {
    const NodeId w1 = tape.input(adversary.params.value("aw1"));
    const NodeId b1 = tape.input(adversary.params.value("ab1"));
    const NodeId w2 = tape.input(adversary.params.value("aw2"));
    const NodeId b2 = tape.input(adversary.params.value("ab2"));
    const NodeId hidden = tape.sigmoid(tape.affine(h, w1, b1));
    return tape.softmax(tape.affine(hidden, w2, b2));
}

double adversary_accuracy(const AdversaryHead& adversary, const Tensor& latents,
                          const std::vector<int>& genders) {
    const std::size_t n = latents.rows();
    if (n == 0 || genders.size() != n) {
        throw DataError("adversary_accuracy: latent/label size mismatch");
    }
    std::size_t correct = 0;
    for (std::size_t off = 0; off < n; off += kChunk) {
        const std::size_t hi = std::min(n, off + kChunk);
        Tensor chunk = Tensor::zeros({hi - off, latents.cols()});
        std::copy(latents.data.begin() + static_cast<std::ptrdiff_t>(off * latents.cols()),
                  latents.data.begin() + static_cast<std::ptrdiff_t>(hi * latents.cols()),
                  chunk.data.begin());
        Tape tape;
        const NodeId h = tape.input(std::move(chunk));
        const NodeId q = adversary_graph_const(tape, adversary, h);
        const Tensor& probs = tape.value(q);
        for (std::size_t r = 0; r < hi - off; ++r) {
            const int pred = probs.data[r * 2 + 1] > probs.data[r * 2] ? 1 : 0;
            if (pred == genders[off + r]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

std::vector<AdvEpochStats> adversarial_train(ScoringModel& model, AdversaryHead& adversary,
                                             const ProfileSet& train_set,
                                             const ProfileSet& val_set, const Embedder& embedder,
                                             const AdversarialConfig& config) {
    config.validate();
    if (train_set.empty()) throw DataError("train set is empty");
    const FeatureSet train_f = compute_features(train_set, embedder);
    require_both_genders(train_f.gender, "adversarial_train");
    FeatureSet val_f;
    const FeatureSet* val_ptr = nullptr;
    if (!val_set.empty()) {
        val_f = compute_features(val_set, embedder);
        val_ptr = &val_f;
    }

    std::vector<AdvEpochStats> adv_stats;
    AdversarialHooks hooks(adversary, config, train_f, val_ptr, adv_stats);
    const auto base = train_with_hooks(model, train_f, val_ptr, config.train, &hooks);

    std::vector<AdvEpochStats> history;
    history.reserve(base.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
        AdvEpochStats row = adv_stats[i];
        row.epoch = base[i].epoch;
        row.train_rmse = base[i].train_rmse;
        row.val_rmse = base[i].val_rmse;
        history.push_back(row);
    }
    return history;
}

double probe_gender_features(const Tensor& latents, const std::vector<int>& genders,
                             const ProbeConfig& config) {
    const std::size_t n = latents.rows();
    if (n == 0 || genders.size() != n) throw DataError("probe: latent/label size mismatch");
    require_both_genders(genders, "probe");
    if (config.holdout_fraction <= 0.0 || config.holdout_fraction >= 1.0) {
        throw ConfigError("probe holdout_fraction must lie in (0, 1)");
    }

    // Stratified holdout split over labels.
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> held_idx;
    for (int label = 0; label < 2; ++label) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < n; ++i) {
            if (genders[i] == label) members.push_back(i);
        }
        Rng rng(derive_seed(config.seed, "probe-split", static_cast<std::uint64_t>(label)));
        rng.shuffle(members);
        const auto n_held = static_cast<std::size_t>(
            std::llround(config.holdout_fraction * static_cast<double>(members.size())));
        if (n_held == 0 || n_held >= members.size()) {
            throw SplitError("probe holdout leaves an empty partition");
        }
        for (std::size_t i = 0; i < members.size(); ++i) {
            (i < n_held ? held_idx : train_idx).push_back(members[i]);
        }
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(held_idx.begin(), held_idx.end());

    AdversaryHead probe = AdversaryHead::init(derive_seed(config.seed, "probe-init"));
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<std::size_t> order = train_idx;
        Rng shuffle_rng(derive_seed(config.seed, "probe-shuffle",
                                    static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);
        const std::size_t n_train = order.size();
        const int n_batches =
            static_cast<int>((n_train + config.batch_size - 1) / config.batch_size);
        for (int batch = 0; batch < n_batches; ++batch) {
            const std::size_t lo = static_cast<std::size_t>(batch) * config.batch_size;
            const std::size_t hi = std::min(n_train, lo + config.batch_size);
            Tensor h_b = gather_rows(latents, order, lo, hi);
            std::vector<int> z_b(hi - lo);
            for (std::size_t r = lo; r < hi; ++r) z_b[r - lo] = genders[order[r]];
            Tape tape;
            const NodeId h = tape.input(std::move(h_b));
            Rng dropout_rng(derive_seed(config.seed, "probe-dropout",
                                        static_cast<std::uint64_t>(epoch),
                                        static_cast<std::uint64_t>(batch), 1));
            const NodeId q = adversary_graph(tape, probe, h, true, &dropout_rng);
            const NodeId ce = tape.cross_entropy(q, std::move(z_b));
            tape.backward(ce);
            probe.params.step_adamw(config.adamw());
        }
    }

    Tensor held = gather_rows(latents, held_idx, 0, held_idx.size());
    std::vector<int> held_z(held_idx.size());
    for (std::size_t i = 0; i < held_idx.size(); ++i) held_z[i] = genders[held_idx[i]];
    return adversary_accuracy(probe, held, held_z);
}

double probe_gender(const ScoringModel& model, const Embedder& embedder,
                    const ProfileSet& profiles, const ProbeConfig& config) {
    const FeatureSet f = compute_features(profiles, embedder);
    return probe_gender_features(infer_latents(model, f), f.gender, config);
}

namespace {

constexpr char kAdvMagic[8] = {'F', 'P', 'A', 'D', '0', '0', '0', '1'};

template <typename T>
void write_raw(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in, const char* what) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw IoError(std::string("adversary checkpoint truncated at ") + what);
    return v;
}

}  // namespace

void save_adversary(const AdversaryHead& adversary, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write adversary checkpoint '" + path + "'");
    out.write(kAdvMagic, 8);
    write_raw<double>(out, adversary.dropout_rate);
    write_raw<std::uint64_t>(out, adversary.params.size());
    for (const auto& [name, entry] : adversary.params.entries()) {
        write_raw<std::uint64_t>(out, name.size());
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_raw<std::uint64_t>(out, entry.value.shape.size());
        for (const auto d : entry.value.shape) write_raw<std::uint64_t>(out, d);
        out.write(reinterpret_cast<const char*>(entry.value.data.data()),
                  static_cast<std::streamsize>(entry.value.data.size() * sizeof(double)));
    }
    if (!out) throw IoError("failed writing adversary checkpoint '" + path + "'");
}

AdversaryHead load_adversary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open adversary checkpoint '" + path + "'");
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kAdvMagic, 8) != 0) {
        throw IoError("'" + path + "' is not an adversary checkpoint");
    }
    AdversaryHead a;
    a.dropout_rate = read_raw<double>(in, "dropout rate");
    const auto count = read_raw<std::uint64_t>(in, "param count");
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto name_len = read_raw<std::uint64_t>(in, "name length");
        std::string name(name_len, '\0');
        in.read(name.data(), static_cast<std::streamsize>(name_len));
        const auto ndim = read_raw<std::uint64_t>(in, "rank");
        std::vector<std::size_t> shape;
        for (std::uint64_t d = 0; d < ndim; ++d) {
            shape.push_back(read_raw<std::uint64_t>(in, "dim"));
        }
        Tensor t = Tensor::zeros(shape);
        in.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        if (!in) throw IoError("adversary checkpoint truncated in parameter data");
        a.params.add(name, std::move(t));
    }
    return a;
}

void save_adv_history_csv(const std::vector<AdvEpochStats>& history, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write history '" + path + "'");
    out << "epoch,train_rmse,val_rmse,adversary_train_acc,adversary_val_acc\n";
    char buf[192];
    for (const auto& row : history) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g\n", row.epoch,
                      row.train_rmse, row.val_rmse, row.adv_train_acc, row.adv_val_acc);
        out << buf;
    }
}

}  // namespace fairpipe
