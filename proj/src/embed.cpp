#include "fairpipe/embed.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "fairpipe/errors.hpp"
#include "fairpipe/rng.hpp"

namespace fairpipe {

namespace {

constexpr char kEmbMagic[8] = {'F', 'P', 'E', 'M', 'B', '0', '0', '1'};

template <typename T>
void write_raw(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in, const char* what) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw IoError(std::string("embedding file truncated while reading ") + what);
    return v;
}

}  // namespace

std::string to_string(EmbedderKind kind) {
    return kind == EmbedderKind::hashing ? "hashing" : "precomputed";
}

EmbedderKind embedder_kind_from_string(const std::string& s) {
    if (s == "hashing") return EmbedderKind::hashing;
    if (s == "precomputed") return EmbedderKind::precomputed;
    throw ConfigError("unknown embedder kind '" + s + "'");
}

void EmbedderConfig::validate() const {
    if (dim == 0) throw ConfigError("embedder dim must be positive");
    if (kind == EmbedderKind::precomputed && path.empty()) {
        throw ConfigError("precomputed embedder requires a path");
    }
}

std::unique_ptr<Embedder> Embedder::create(const EmbedderConfig& config) {
    config.validate();
    if (config.kind == EmbedderKind::hashing) {
        return std::make_unique<HashingEmbedder>(config);
    }
    return std::make_unique<PrecomputedEmbedder>(config);
}

HashingEmbedder::HashingEmbedder(EmbedderConfig config) : Embedder(std::move(config)) {
    config_.validate();
}

std::vector<double> HashingEmbedder::token_vector(const std::string& token) const {
    std::vector<double> v(dim_, 0.0);
    if (token == kPadToken) return v;
    Rng rng(derive_seed(config_.seed, "token", hash_token(token)));
    double norm_sq = 0.0;
    for (auto& x : v) {
        x = rng.gaussian();
        norm_sq += x * x;
    }
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (auto& x : v) x *= inv;
    return v;
}

EmbeddingMatrix HashingEmbedder::embed(const TokenSequence& tokens, std::int64_t) const {
    const std::size_t tau = tokens.padded_len();
    if (tau == 0) throw DataError("cannot embed an empty token sequence");
    EmbeddingMatrix m;
    m.values = Tensor::zeros({tau, dim_});
    m.row_mask.assign(tau, 0);
    for (std::size_t r = 0; r < tau; ++r) {
        const std::string& tok = tokens.tokens[r];
        if (tok == kPadToken) continue;
        const auto v = token_vector(tok);
        std::copy(v.begin(), v.end(), m.values.data.begin() + static_cast<std::ptrdiff_t>(r * dim_));
        m.row_mask[r] = 1;
    }
    return m;
}

PrecomputedEmbedder::PrecomputedEmbedder(EmbedderConfig config) : Embedder(std::move(config)) {
    config_.validate();
    std::ifstream in(config_.path, std::ios::binary);
    if (!in) throw IoError("cannot open embedding file '" + config_.path + "'");
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kEmbMagic, 8) != 0) {
        throw IoError("'" + config_.path + "' is not a precomputed embedding file");
    }
    const auto dim = read_raw<std::uint64_t>(in, "dim");
    if (dim != config_.dim) {
        throw ConfigError("embedding file dim " + std::to_string(dim) +
                          " does not match configured dim " + std::to_string(config_.dim));
    }
    const auto count = read_raw<std::uint64_t>(in, "count");
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto id = read_raw<std::int64_t>(in, "record id");
        const auto tau = read_raw<std::uint64_t>(in, "record tau");
        Tensor t = Tensor::zeros({static_cast<std::size_t>(tau), dim_});
        in.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        if (!in) throw IoError("embedding file truncated in record body");
        rows_by_id_.emplace(id, std::move(t));
    }
}

EmbeddingMatrix PrecomputedEmbedder::embed(const TokenSequence& tokens,
                                           std::int64_t profile_id) const {
    auto it = rows_by_id_.find(profile_id);
    if (it == rows_by_id_.end()) {
        throw LookupError("profile id " + std::to_string(profile_id) +
                          " not present in embedding file");
    }
    const Tensor& stored = it->second;
    if (stored.rows() != tokens.padded_len()) {
        throw DataError("embedding record for id " + std::to_string(profile_id) + " has " +
                        std::to_string(stored.rows()) + " rows, sequence has " +
                        std::to_string(tokens.padded_len()));
    }
    EmbeddingMatrix m;
    m.values = stored;
    m.row_mask.assign(tokens.padded_len(), 0);
    for (std::size_t r = 0; r < tokens.padded_len(); ++r) {
        if (tokens.tokens[r] == kPadToken) {
            // Keep the [PAD]-rows-are-zero invariant regardless of file contents.
            for (std::size_t c = 0; c < dim_; ++c) m.values.data[r * dim_ + c] = 0.0;
        } else {
            m.row_mask[r] = 1;
        }
    }
    return m;
}

Tensor pool_mean(const EmbeddingMatrix& m) {
    std::size_t k = 0;
    for (const auto f : m.row_mask) k += f ? 1 : 0;
    if (k == 0) throw DataError("pool_mean: sequence has no content rows");
    const std::size_t cols = m.values.cols();
    Tensor out = Tensor::zeros({cols});
    for (std::size_t r = 0; r < m.values.rows(); ++r) {
        if (!m.row_mask[r]) continue;
        for (std::size_t c = 0; c < cols; ++c) out.data[c] += m.values.data[r * cols + c];
    }
    for (double& v : out.data) v /= static_cast<double>(k);
    return out;
}

void save_precomputed_embeddings(const std::string& path, std::size_t dim,
                                 const std::vector<PrecomputedRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write embedding file '" + path + "'");
    out.write(kEmbMagic, 8);
    write_raw<std::uint64_t>(out, dim);
    write_raw<std::uint64_t>(out, records.size());
    for (const auto& rec : records) {
        if (rec.values.cols() != dim) {
            throw ConfigError("record dim mismatch for id " + std::to_string(rec.id));
        }
        write_raw<std::int64_t>(out, rec.id);
        write_raw<std::uint64_t>(out, rec.values.rows());
        out.write(reinterpret_cast<const char*>(rec.values.data.data()),
                  static_cast<std::streamsize>(rec.values.data.size() * sizeof(double)));
    }
    if (!out) throw IoError("failed writing embedding file '" + path + "'");
}

}  // namespace fairpipe
