#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "fairpipe/datagen.hpp"
#include "fairpipe/tensor.hpp"

namespace fairpipe {

enum class EmbedderKind { hashing, precomputed };

struct EmbedderConfig {
    std::size_t dim = 768;
    EmbedderKind kind = EmbedderKind::hashing;
    std::uint64_t seed = 0;
    std::string path;  // precomputed only

    void validate() const;
};

std::string to_string(EmbedderKind kind);
EmbedderKind embedder_kind_from_string(const std::string& s);

// Per-token embeddings for one sequence. "[PAD]" rows are exactly zero and
// masked out; masked rows never contribute to pooling.
struct EmbeddingMatrix {
    Tensor values;                       // tau x N
    std::vector<std::uint8_t> row_mask;  // 1 = content row
};

// Frozen text-understanding stage: tokens in, per-token embeddings out.
// Instances are immutable after construction; concurrent embedding of
// different sequences is safe.
class Embedder {
public:
    virtual ~Embedder() = default;
    virtual EmbeddingMatrix embed(const TokenSequence& tokens, std::int64_t profile_id) const = 0;
    std::size_t dim() const { return dim_; }
    const EmbedderConfig& config() const { return config_; }

    static std::unique_ptr<Embedder> create(const EmbedderConfig& config);

protected:
    explicit Embedder(EmbedderConfig config) : config_(std::move(config)), dim_(config_.dim) {}
    EmbedderConfig config_;
    std::size_t dim_;
};

// Deterministic seeded-hash embedder: each distinct token maps to a fixed
// unit-norm direction in R^N ("[MASK]" included), "[PAD]" to the zero
// vector. Tokens whose 64-bit hashes collide share a vector; at N >= 64 the
// shipped lexicon has no collisions.
class HashingEmbedder : public Embedder {
public:
    explicit HashingEmbedder(EmbedderConfig config);
    EmbeddingMatrix embed(const TokenSequence& tokens, std::int64_t profile_id) const override;
    std::vector<double> token_vector(const std::string& token) const;
};

// Loads externally computed per-token embeddings keyed by profile id.
class PrecomputedEmbedder : public Embedder {
public:
    explicit PrecomputedEmbedder(EmbedderConfig config);
    EmbeddingMatrix embed(const TokenSequence& tokens, std::int64_t profile_id) const override;

private:
    std::map<std::int64_t, Tensor> rows_by_id_;
};

// Arithmetic mean over unmasked rows; throws DataError on all-[PAD] input.
Tensor pool_mean(const EmbeddingMatrix& m);

// Precomputed embedding file: little-endian; magic "FPEMB001", u64 dim,
// u64 count, then records { i64 id, u64 tau, tau*dim f64 }.
struct PrecomputedRecord {
    std::int64_t id;
    Tensor values;  // tau x dim
};
void save_precomputed_embeddings(const std::string& path, std::size_t dim,
                                 const std::vector<PrecomputedRecord>& records);

}  // namespace fairpipe
