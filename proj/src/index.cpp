#include "kirag/index.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <unordered_set>

#include "json.hpp"

namespace kirag {

using nlohmann::json;

std::string format_iterative_query(const std::string& question, const ReasoningChain& chain,
                                   const std::string& label) {
    if (chain.empty()) return question;
    std::string out = question + ". " + label + ": ";
    for (size_t i = 0; i < chain.steps.size(); ++i) {
        if (i > 0) out += ", ";
        out += chain.steps[i].text;
    }
    return out;
}

namespace {

void check_unit_rows(const std::vector<float>& matrix, size_t count, int dim,
                     const std::string& context) {
    for (size_t r = 0; r < count; ++r) {
        double sq = 0.0;
        for (int c = 0; c < dim; ++c) {
            double v = matrix[r * static_cast<size_t>(dim) + static_cast<size_t>(c)];
            sq += v * v;
        }
        if (std::abs(std::sqrt(sq) - 1.0) > 1e-6)
            throw std::runtime_error(context + ": row " + std::to_string(r) + " is not unit-norm");
    }
}

}  // namespace

DenseIndex DenseIndex::build(const std::vector<Document>& docs, EmbeddingBackend& backend,
                             const PrefixConfig& prefixes) {
    if (docs.empty()) throw std::runtime_error("cannot build index over an empty corpus");
    std::unordered_set<std::string> seen;
    std::vector<std::string> inputs;
    inputs.reserve(docs.size());
    DenseIndex index;
    index.doc_ids_.reserve(docs.size());
    for (const auto& doc : docs) {
        if (doc.doc_id.empty()) throw std::runtime_error("document with empty doc_id");
        if (!seen.insert(doc.doc_id).second)
            throw std::runtime_error("duplicate doc_id in index input: " + doc.doc_id);
        index.doc_ids_.push_back(doc.doc_id);
        inputs.push_back(doc.title + "\n" + doc.text);
    }

    std::vector<EmbeddingVector> rows;
    try {
        rows = embed_passages(backend, prefixes, inputs);
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("index build embedding failed: ") + e.what());
    }
    if (rows.size() != docs.size())
        throw std::runtime_error("embedding backend returned wrong batch size for index build");

    index.dim_ = backend.dimension();
    index.backend_name_ = backend.name();
    index.prefixes_ = prefixes;
    index.matrix_.resize(docs.size() * static_cast<size_t>(index.dim_));
    for (size_t r = 0; r < rows.size(); ++r) {
        if (static_cast<int>(rows[r].size()) != index.dim_)
            throw std::runtime_error("embedding dimension mismatch for doc " + index.doc_ids_[r]);
        std::copy(rows[r].begin(), rows[r].end(),
                  index.matrix_.begin() + static_cast<long>(r * static_cast<size_t>(index.dim_)));
    }
    check_unit_rows(index.matrix_, index.doc_ids_.size(), index.dim_, "index build");
    return index;
}

std::vector<SearchHit> DenseIndex::search(const std::string& query_text, int k,
                                          EmbeddingBackend& backend) const {
    if (k < 1) throw std::invalid_argument("search k must be >= 1");
    if (doc_ids_.empty()) throw std::runtime_error("search on an empty index");
    if (backend.dimension() != dim_)
        throw std::runtime_error("query backend dimension " + std::to_string(backend.dimension()) +
                                 " does not match index dimension " + std::to_string(dim_));

    EmbeddingVector q = embed_queries(backend, prefixes_, {query_text}).at(0);
    std::vector<SearchHit> hits;
    hits.reserve(doc_ids_.size());
    for (size_t r = 0; r < doc_ids_.size(); ++r) {
        double dot = 0.0;
        const float* row = matrix_.data() + r * static_cast<size_t>(dim_);
        for (int c = 0; c < dim_; ++c) dot += static_cast<double>(row[c]) * static_cast<double>(q[static_cast<size_t>(c)]);
        hits.push_back(SearchHit{doc_ids_[r], dot});
    }
    std::sort(hits.begin(), hits.end(), [](const SearchHit& a, const SearchHit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.doc_id < b.doc_id;
    });
    hits.resize(std::min<size_t>(static_cast<size_t>(k), hits.size()));
    return hits;
}

namespace {
constexpr char kIndexMagic[9] = "KIRAGIX1";  // 8 chars + NUL
}

void DenseIndex::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write index file: " + path);
    json header = {{"version", 1},
                   {"dim", dim_},
                   {"count", doc_ids_.size()},
                   {"backend", backend_name_},
                   {"query_prefix", prefixes_.query_prefix},
                   {"passage_prefix", prefixes_.passage_prefix},
                   {"doc_ids", doc_ids_}};
    const std::string header_bytes = header.dump();
    const uint64_t header_len = header_bytes.size();
    out.write(kIndexMagic, 8);
    out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
    out.write(header_bytes.data(), static_cast<std::streamsize>(header_bytes.size()));
    out.write(reinterpret_cast<const char*>(matrix_.data()),
              static_cast<std::streamsize>(matrix_.size() * sizeof(float)));
    if (!out) throw std::runtime_error("short write to index file: " + path);
}

DenseIndex DenseIndex::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open index file: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kIndexMagic, 8) != 0)
        throw std::runtime_error("not an index file (bad magic): " + path);
    uint64_t header_len = 0;
    in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
    if (!in || header_len == 0 || header_len > (64ull << 20))
        throw std::runtime_error("corrupt index header length: " + path);
    std::string header_bytes(header_len, '\0');
    in.read(header_bytes.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw std::runtime_error("truncated index header: " + path);

    json header = json::parse(header_bytes, nullptr, false);
    if (header.is_discarded()) throw std::runtime_error("corrupt index header JSON: " + path);
    DenseIndex index;
    try {
        if (header.at("version").get<int>() != 1)
            throw std::runtime_error("unsupported index version");
        index.dim_ = header.at("dim").get<int>();
        index.doc_ids_ = header.at("doc_ids").get<std::vector<std::string>>();
        if (header.at("count").get<size_t>() != index.doc_ids_.size())
            throw std::runtime_error("doc_id count mismatch");
        index.backend_name_ = header.value("backend", std::string());
        index.prefixes_.query_prefix = header.value("query_prefix", std::string());
        index.prefixes_.passage_prefix = header.value("passage_prefix", std::string());
    } catch (const json::exception& e) {
        throw std::runtime_error("corrupt index header in " + path + ": " + e.what());
    }
    if (index.dim_ < 1) throw std::runtime_error("corrupt index dimension in " + path);

    index.matrix_.resize(index.doc_ids_.size() * static_cast<size_t>(index.dim_));
    if (!index.matrix_.empty()) {
        in.read(reinterpret_cast<char*>(index.matrix_.data()),
                static_cast<std::streamsize>(index.matrix_.size() * sizeof(float)));
        if (!in || in.gcount() != static_cast<std::streamsize>(index.matrix_.size() * sizeof(float)))
            throw std::runtime_error("truncated index matrix: " + path);
    }
    check_unit_rows(index.matrix_, index.doc_ids_.size(), index.dim_, "index load");
    return index;
}

}  // namespace kirag
