#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>

#include "fairpipe/embed.hpp"
#include "fairpipe/errors.hpp"
#include "fairpipe/lexicon.hpp"

using namespace fairpipe;

namespace {

EmbedderConfig hashing_config(std::size_t dim = 64, std::uint64_t seed = 5) {
    EmbedderConfig c;
    c.dim = dim;
    c.kind = EmbedderKind::hashing;
    c.seed = seed;
    return c;
}

TokenSequence seq(std::vector<std::string> tokens) {
    TokenSequence s;
    s.logical_len = tokens.size();
    s.tokens = std::move(tokens);
    return s;
}

}  // namespace

TEST_CASE("hashing embedder is deterministic per token") {
    const HashingEmbedder emb(hashing_config());
    CHECK(emb.token_vector("teacher") == emb.token_vector("teacher"));
    CHECK(emb.token_vector("teacher") != emb.token_vector("nurse"));
    const HashingEmbedder other(hashing_config(64, 6));
    CHECK(emb.token_vector("teacher") != other.token_vector("teacher"));
}

TEST_CASE("hashing vectors are unit norm; [PAD] is zero; [MASK] is not") {
    const HashingEmbedder emb(hashing_config(128));
    for (const auto& tok : {"children", "engineer", "[MASK]", "x"}) {
        const auto v = emb.token_vector(tok);
        double norm = 0.0;
        for (const double x : v) norm += x * x;
        CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-9);
    }
    const auto pad = emb.token_vector(kPadToken);
    for (const double x : pad) CHECK(x == 0.0);
}

TEST_CASE("embedding matrix masks [PAD] rows") {
    const HashingEmbedder emb(hashing_config());
    auto s = seq({"mary", "is", "[PAD]", "nurse"});
    const auto m = emb.embed(s, 0);
    REQUIRE(m.row_mask.size() == 4);
    CHECK(m.row_mask[0] == 1);
    CHECK(m.row_mask[2] == 0);
    for (std::size_t c = 0; c < emb.dim(); ++c) CHECK(m.values.at(2, c) == 0.0);
}

TEST_CASE("pool_mean spot cases and the re-summation oracle") {
    const std::size_t dim = 8;
    EmbeddingMatrix m;
    m.values = Tensor::zeros({2, dim});
    m.row_mask = {1, 1};
    Rng rng(3);
    for (std::size_t c = 0; c < dim; ++c) {
        const double v = rng.uniform(-1, 1);
        m.values.at(0, c) = v;
        m.values.at(1, c) = v;
    }
    auto pooled = pool_mean(m);
    for (std::size_t c = 0; c < dim; ++c) {
        CHECK(pooled.data[c] == doctest::Approx(m.values.at(0, c)).epsilon(1e-15));
    }

    // Opposite rows cancel.
    for (std::size_t c = 0; c < dim; ++c) m.values.at(1, c) = -m.values.at(0, c);
    pooled = pool_mean(m);
    for (std::size_t c = 0; c < dim; ++c) CHECK(pooled.data[c] == doctest::Approx(0.0));

    // Independent re-summation over random rows.
    EmbeddingMatrix r;
    r.values = Tensor::zeros({3, dim});
    r.row_mask = {1, 1, 1};
    for (double& v : r.values.data) v = rng.uniform(-2, 2);
    pooled = pool_mean(r);
    for (std::size_t c = 0; c < dim; ++c) {
        const double expected =
            (r.values.at(0, c) + r.values.at(1, c) + r.values.at(2, c)) / 3.0;
        CHECK(pooled.data[c] == doctest::Approx(expected).epsilon(1e-15));
    }
}

TEST_CASE("pooling ignores [PAD] and is permutation invariant") {
    const HashingEmbedder emb(hashing_config());
    auto a = seq({"mary", "teaches", "children"});
    auto b = seq({"children", "mary", "teaches"});
    auto padded = a;
    padded.pad_to(10);
    const auto pa = pool_mean(emb.embed(a, 0));
    const auto pb = pool_mean(emb.embed(b, 0));
    const auto pc = pool_mean(emb.embed(padded, 0));
    for (std::size_t c = 0; c < emb.dim(); ++c) {
        CHECK(pa.data[c] == doctest::Approx(pb.data[c]).epsilon(1e-12));
        CHECK(pa.data[c] == doctest::Approx(pc.data[c]).epsilon(1e-12));
    }
}

TEST_CASE("pool_mean rejects all-[PAD] sequences") {
    const HashingEmbedder emb(hashing_config());
    auto s = seq({"[PAD]", "[PAD]"});
    CHECK_THROWS_AS(pool_mean(emb.embed(s, 0)), DataError);
}

TEST_CASE("shipped lexicon has collision-free token hashes and distinct vectors") {
    const auto lex = Lexicon::builtin();
    std::set<std::uint64_t> hashes;
    std::size_t n = 0;
    for (const auto& [token, entry] : lex.entries()) {
        hashes.insert(hash_token(token));
        ++n;
    }
    // Tokens colliding under the hash would share a vector; the shipped
    // lexicon has no collisions at all.
    CHECK(hashes.size() == n);
}

TEST_CASE("precomputed embedding file round-trips and validates") {
    const std::size_t dim = 16;
    const auto path = (std::filesystem::temp_directory_path() / "fp_emb_test.bin").string();

    std::vector<PrecomputedRecord> records;
    Rng rng(8);
    PrecomputedRecord rec;
    rec.id = 42;
    rec.values = Tensor::zeros({3, dim});
    for (double& v : rec.values.data) v = rng.uniform(-1, 1);
    records.push_back(rec);
    save_precomputed_embeddings(path, dim, records);

    EmbedderConfig cfg;
    cfg.dim = dim;
    cfg.kind = EmbedderKind::precomputed;
    cfg.path = path;
    const auto emb = Embedder::create(cfg);

    auto s = seq({"a", "b", "[PAD]"});
    const auto m = emb->embed(s, 42);
    CHECK(m.values.rows() == 3);
    CHECK(m.row_mask[2] == 0);
    for (std::size_t c = 0; c < dim; ++c) {
        CHECK(m.values.at(0, c) == rec.values.at(0, c));
        CHECK(m.values.at(2, c) == 0.0);  // [PAD] row zeroed on load
    }

    CHECK_THROWS_AS(emb->embed(s, 7), LookupError);  // unknown id
    auto wrong_len = seq({"a", "b"});
    CHECK_THROWS_AS(emb->embed(wrong_len, 42), DataError);

    EmbedderConfig bad = cfg;
    bad.dim = 32;
    CHECK_THROWS_AS(Embedder::create(bad), ConfigError);  // dim mismatch

    std::remove(path.c_str());
}

TEST_CASE("embedder config validation") {
    EmbedderConfig c;
    c.dim = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.dim = 8;
    c.kind = EmbedderKind::precomputed;
    c.path = "";
    CHECK_THROWS_AS(c.validate(), ConfigError);
}
