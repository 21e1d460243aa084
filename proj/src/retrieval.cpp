#include "ehrq/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

#include "ehrq/errors.hpp"
#include "ehrq/util.hpp"
#include "http_client.hpp"

namespace ehrq {

namespace {

void l2_normalize(EmbeddingVector& v) {
    double n = 0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (!(n > 0) || !std::isfinite(n)) throw BackendError("embedding has zero or non-finite norm");
    for (double& x : v) x /= n;
}

}  // namespace

std::vector<EmbeddingVector> Embedder::embed_batch(const std::vector<std::string>& texts) {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed(t));
    return out;
}

HashedTrigramEmbedder::HashedTrigramEmbedder(std::size_t dimension) : dimension_(dimension) {
    if (dimension_ == 0) throw ConfigError("embedding dimension must be positive");
}

std::string HashedTrigramEmbedder::identity() const { return "hashed-trigram/" + std::to_string(dimension_); }

EmbeddingVector HashedTrigramEmbedder::embed(std::string_view text) {
    if (text.empty()) throw ValidationError("cannot embed empty text");
    const std::string padded = "  " + to_lower(text) + "  ";
    EmbeddingVector v(dimension_, 0.0);
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i)
        v[fnv1a(std::string_view(padded).substr(i, 3)) % dimension_] += 1.0;
    l2_normalize(v);
    return v;
}

HttpEmbedder::HttpEmbedder(std::string url, std::string api_key, int max_retries)
    : url_(std::move(url)), api_key_(std::move(api_key)), max_retries_(max_retries) {}

EmbeddingVector HttpEmbedder::embed(std::string_view text) { return embed_batch({std::string(text)}).front(); }

std::vector<EmbeddingVector> HttpEmbedder::embed_batch(const std::vector<std::string>& texts) {
    for (const auto& t : texts)
        if (t.empty()) throw ValidationError("cannot embed empty text");
    auto reply = detail::post_json(url_, {{"texts", texts}}, api_key_, max_retries_);
    if (!reply.contains("vectors") || !reply["vectors"].is_array() || reply["vectors"].size() != texts.size())
        throw BackendError("embedding reply lacks one vector per text");
    std::vector<EmbeddingVector> out;
    for (const auto& v : reply["vectors"]) {
        EmbeddingVector e = v.get<EmbeddingVector>();
        l2_normalize(e);
        out.push_back(std::move(e));
    }
    return out;
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.size() != b.size()) throw ValidationError("embedding dimensions differ");
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0 || nb == 0) return 0.0;
    return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

std::vector<Exemplar> load_exemplars(const std::filesystem::path& jsonl) {
    std::ifstream in(jsonl);
    if (!in) throw LoadError("cannot open exemplar file " + jsonl.string());
    std::vector<Exemplar> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (trim(line).empty()) continue;
        try {
            auto j = nlohmann::json::parse(line);
            out.push_back({j.at("question").get<std::string>(), j.at("query").get<std::string>(),
                           j.value("template_id", "")});
        } catch (const nlohmann::json::exception& e) {
            throw LoadError(jsonl.string() + ":" + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

void write_exemplars(const std::vector<Exemplar>& exemplars, const std::filesystem::path& jsonl) {
    std::string out;
    for (const auto& e : exemplars) {
        nlohmann::json j{{"question", e.question}, {"query", e.query}};
        if (!e.template_id.empty()) j["template_id"] = e.template_id;
        out += j.dump() + "\n";
    }
    write_file(jsonl.string(), out);
}

std::filesystem::path default_exemplars_path() { return std::filesystem::path(EHRQ_DATA_DIR) / "exemplars.jsonl"; }

ExemplarIndex::ExemplarIndex(std::vector<Exemplar> exemplars, Embedder& embedder)
    : exemplars_(std::move(exemplars)), embedder_id_(embedder.identity()) {
    std::vector<std::string> texts;
    for (const auto& e : exemplars_) texts.push_back(e.question);
    vectors_ = embedder.embed_batch(texts);
}

ExemplarIndex::ExemplarIndex(std::vector<Exemplar> exemplars, std::vector<EmbeddingVector> vectors,
                             std::string embedder_id)
    : exemplars_(std::move(exemplars)), vectors_(std::move(vectors)), embedder_id_(std::move(embedder_id)) {
    if (exemplars_.size() != vectors_.size()) throw IndexError("exemplar and vector counts differ");
    for (const auto& v : vectors_) {
        if (v.size() != vectors_.front().size()) throw IndexError("exemplar vectors differ in dimension");
        for (double x : v)
            if (!std::isfinite(x)) throw IndexError("exemplar vector has a non-finite entry");
    }
}

std::vector<ScoredExemplar> ExemplarIndex::top_k(const EmbeddingVector& query, std::size_t k) const {
    if (exemplars_.empty()) throw IndexError("exemplar index is empty");
    if (k < 1) throw ValidationError("top_k requires k >= 1");
    std::vector<ScoredExemplar> all;
    all.reserve(exemplars_.size());
    for (std::size_t i = 0; i < exemplars_.size(); ++i) all.push_back({i, &exemplars_[i], cosine(query, vectors_[i])});
    const std::size_t n = std::min(k, all.size());
    std::stable_sort(all.begin(), all.end(),
                     [](const ScoredExemplar& a, const ScoredExemplar& b) { return a.similarity > b.similarity; });
    all.resize(n);
    return all;
}

std::vector<ScoredExemplar> ExemplarIndex::top_k(std::string_view question, Embedder& embedder, std::size_t k) const {
    return top_k(embedder.embed(question), k);
}

}  // namespace ehrq
