#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace ehrq {

using EmbeddingVector = std::vector<double>;

class Embedder {
public:
    virtual ~Embedder() = default;
    /// Throws ValidationError on empty text, BackendError on remote failure.
    virtual EmbeddingVector embed(std::string_view text) = 0;
    virtual std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts);
    virtual std::string identity() const = 0;
};

/// Offline default: lowercased text padded with two spaces, byte trigrams
/// hashed (FNV-1a) into `dimension` buckets, counts L2-normalized.
class HashedTrigramEmbedder final : public Embedder {
public:
    explicit HashedTrigramEmbedder(std::size_t dimension = 256);
    EmbeddingVector embed(std::string_view text) override;
    std::string identity() const override;

private:
    std::size_t dimension_;
};

/// POST {texts:[...]} -> {vectors:[[...]]}. Vectors are L2-normalized locally.
class HttpEmbedder final : public Embedder {
public:
    HttpEmbedder(std::string url, std::string api_key, int max_retries = 2);
    EmbeddingVector embed(std::string_view text) override;
    std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) override;
    std::string identity() const override { return "http-embed:" + url_; }

private:
    std::string url_;
    std::string api_key_;
    int max_retries_;
};

double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

struct Exemplar {
    std::string question;
    std::string query;
    std::string template_id;  // optional provenance in the bank
};

std::vector<Exemplar> load_exemplars(const std::filesystem::path& jsonl);
void write_exemplars(const std::vector<Exemplar>& exemplars, const std::filesystem::path& jsonl);
std::filesystem::path default_exemplars_path();

struct ScoredExemplar {
    std::size_t index = 0;  // position in the index
    const Exemplar* exemplar = nullptr;
    double similarity = 0.0;
};

class ExemplarIndex {
public:
    ExemplarIndex() = default;
    ExemplarIndex(std::vector<Exemplar> exemplars, Embedder& embedder);
    /// Prebuilt vectors; all must share one dimension.
    ExemplarIndex(std::vector<Exemplar> exemplars, std::vector<EmbeddingVector> vectors, std::string embedder_id);

    /// Exact cosine scan; descending similarity, ties by insertion order.
    /// Throws IndexError on an empty index, ValidationError when k < 1.
    std::vector<ScoredExemplar> top_k(const EmbeddingVector& query, std::size_t k) const;
    std::vector<ScoredExemplar> top_k(std::string_view question, Embedder& embedder, std::size_t k) const;

    std::size_t size() const { return exemplars_.size(); }
    const std::vector<Exemplar>& exemplars() const { return exemplars_; }
    const std::vector<EmbeddingVector>& vectors() const { return vectors_; }
    const std::string& embedder_id() const { return embedder_id_; }

private:
    std::vector<Exemplar> exemplars_;
    std::vector<EmbeddingVector> vectors_;
    std::string embedder_id_;
};

}  // namespace ehrq
