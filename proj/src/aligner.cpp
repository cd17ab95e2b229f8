#include "kirag/aligner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

#include "json.hpp"
#include "kirag/index.hpp"
#include "kirag/metrics.hpp"

namespace kirag {

using nlohmann::json;

namespace {

Eigen::VectorXd to_eigen(const EmbeddingVector& v) {
    Eigen::VectorXd out(static_cast<long>(v.size()));
    for (size_t i = 0; i < v.size(); ++i) out[static_cast<long>(i)] = v[i];
    return out;
}

std::vector<Eigen::VectorXd> to_eigen_batch(const std::vector<EmbeddingVector>& vs) {
    std::vector<Eigen::VectorXd> out;
    out.reserve(vs.size());
    for (const auto& v : vs) out.push_back(to_eigen(v));
    return out;
}

template <typename T>
void deterministic_shuffle(std::vector<T>& v, uint64_t seed) {
    uint64_t state = seed;
    for (size_t i = v.size(); i > 1; --i) {
        size_t j = splitmix64(state) % i;
        std::swap(v[i - 1], v[j]);
    }
}

std::string query_text_for(const TrainingExample& ex) {
    return format_iterative_query(ex.question, ReasoningChain::from_triples(ex.partial_chain));
}

}  // namespace

// ---------------------------------------------------------------------------
// AlignerModel
// ---------------------------------------------------------------------------

AlignerModel::AlignerModel(std::shared_ptr<EmbeddingBackend> backend, PrefixConfig prefixes)
    : backend_(std::move(backend)), prefixes_(std::move(prefixes)) {
    if (!backend_) throw std::invalid_argument("aligner requires an embedding backend");
    const int dim = backend_->dimension();
    if (dim < 2) throw std::invalid_argument("aligner requires embedding dimension >= 2");
    projection_ = Eigen::MatrixXd::Identity(dim, dim);
}

void AlignerModel::set_projection(Eigen::MatrixXd p) {
    if (p.rows() != projection_.rows() || p.cols() != projection_.cols())
        throw std::invalid_argument("projection shape mismatch");
    if (!p.allFinite()) throw std::invalid_argument("projection contains non-finite values");
    projection_ = std::move(p);
}

bool AlignerModel::is_identity() const {
    return projection_.isIdentity(0.0);
}

std::vector<Eigen::VectorXd> AlignerModel::raw_embed_queries(
    const std::vector<std::string>& texts) const {
    return to_eigen_batch(embed_queries(*backend_, prefixes_, texts));
}

std::vector<Eigen::VectorXd> AlignerModel::raw_embed_passages(
    const std::vector<std::string>& texts) const {
    return to_eigen_batch(embed_passages(*backend_, prefixes_, texts));
}

Eigen::VectorXd AlignerModel::project(const Eigen::VectorXd& raw) const {
    Eigen::VectorXd y = projection_ * raw;
    const double n = y.norm();
    if (n < 1e-12) {
        Eigen::VectorXd basis = Eigen::VectorXd::Zero(projection_.rows());
        basis[0] = 1.0;
        return basis;
    }
    return y / n;
}

Eigen::VectorXd AlignerModel::encode_query(const std::string& text) const {
    return project(raw_embed_queries({text}).at(0));
}

std::vector<Eigen::VectorXd> AlignerModel::encode_passages(
    const std::vector<std::string>& texts) const {
    auto raw = raw_embed_passages(texts);
    std::vector<Eigen::VectorXd> out;
    out.reserve(raw.size());
    for (const auto& r : raw) out.push_back(project(r));
    return out;
}

std::vector<ScoredTriple> AlignerModel::score_triples(const std::string& query_text,
                                                      const std::vector<KnowledgeTriple>& triples,
                                                      int iteration) const {
    if (triples.empty()) throw std::invalid_argument("score_triples requires nonempty triples");
    Eigen::VectorXd uq = encode_query(query_text);
    std::vector<std::string> texts;
    texts.reserve(triples.size());
    for (const auto& t : triples) texts.push_back(t.wire());
    auto encoded = encode_passages(texts);
    std::vector<ScoredTriple> out;
    out.reserve(triples.size());
    for (size_t i = 0; i < triples.size(); ++i)
        out.push_back(ScoredTriple{triples[i], uq.dot(encoded[i]), iteration});
    return out;
}

std::vector<ScoredUnit> AlignerModel::score_units(const std::string& query_text,
                                                  const std::vector<ChainUnit>& units,
                                                  int iteration) const {
    if (units.empty()) throw std::invalid_argument("score_units requires nonempty units");
    Eigen::VectorXd uq = encode_query(query_text);
    std::vector<std::string> texts;
    texts.reserve(units.size());
    for (const auto& u : units) texts.push_back(u.text);
    auto encoded = encode_passages(texts);
    std::vector<ScoredUnit> out;
    out.reserve(units.size());
    for (size_t i = 0; i < units.size(); ++i)
        out.push_back(ScoredUnit{units[i], uq.dot(encoded[i]), iteration});
    return out;
}

void AlignerModel::save(const std::string& path, const std::string& config_fingerprint) const {
    const long d = projection_.rows();
    std::vector<double> flat;
    flat.reserve(static_cast<size_t>(d * d));
    for (long r = 0; r < d; ++r)
        for (long c = 0; c < d; ++c) flat.push_back(projection_(r, c));
    json doc = {{"version", 1},
                {"dim", d},
                {"backend", backend_->name()},
                {"query_prefix", prefixes_.query_prefix},
                {"passage_prefix", prefixes_.passage_prefix},
                {"config_fingerprint", config_fingerprint},
                {"projection", std::move(flat)}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write model file: " + path);
    out << doc.dump();
    if (!out) throw std::runtime_error("short write to model file: " + path);
}

AlignerModel AlignerModel::load(const std::string& path,
                                std::shared_ptr<EmbeddingBackend> backend) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open model file: " + path);
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw std::runtime_error("corrupt model file: " + path);
    try {
        if (doc.at("version").get<int>() != 1)
            throw std::runtime_error("unsupported model version");
        const long d = doc.at("dim").get<long>();
        PrefixConfig prefixes{doc.value("query_prefix", std::string()),
                              doc.value("passage_prefix", std::string())};
        AlignerModel model(backend, prefixes);
        if (model.dim() != d)
            throw std::runtime_error("model dimension " + std::to_string(d) +
                                     " does not match backend dimension " +
                                     std::to_string(model.dim()));
        const std::string stored_backend = doc.value("backend", std::string());
        if (!stored_backend.empty() && stored_backend != backend->name())
            log_warn("model file was trained with backend '" + stored_backend +
                     "' but is being loaded with '" + backend->name() + "'");
        const auto flat = doc.at("projection").get<std::vector<double>>();
        if (flat.size() != static_cast<size_t>(d) * static_cast<size_t>(d))
            throw std::runtime_error("projection size mismatch in model file");
        Eigen::MatrixXd p(d, d);
        for (long r = 0; r < d; ++r)
            for (long c = 0; c < d; ++c) p(r, c) = flat[static_cast<size_t>(r * d + c)];
        model.set_projection(std::move(p));
        return model;
    } catch (const json::exception& e) {
        throw std::runtime_error("corrupt model file " + path + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Candidate selection
// ---------------------------------------------------------------------------

std::vector<ScoredTriple> select_candidates(std::vector<ScoredTriple> scored, int n) {
    if (n < 1) throw std::invalid_argument("select_candidates requires n >= 1");
    std::stable_sort(scored.begin(), scored.end(),
                     [](const ScoredTriple& a, const ScoredTriple& b) { return a.score > b.score; });
    if (scored.size() > static_cast<size_t>(n)) scored.resize(static_cast<size_t>(n));
    return scored;
}

std::vector<ScoredUnit> select_candidates(std::vector<ScoredUnit> scored, int n) {
    if (n < 1) throw std::invalid_argument("select_candidates requires n >= 1");
    std::stable_sort(scored.begin(), scored.end(),
                     [](const ScoredUnit& a, const ScoredUnit& b) { return a.score > b.score; });
    if (scored.size() > static_cast<size_t>(n)) scored.resize(static_cast<size_t>(n));
    return scored;
}

// ---------------------------------------------------------------------------
// Contrastive objective
// ---------------------------------------------------------------------------

LossResult contrastive_loss(const Eigen::VectorXd& query, const Eigen::VectorXd& positive,
                            const std::vector<Eigen::VectorXd>& negatives, double tau) {
    if (tau <= 0.0) throw std::invalid_argument("temperature must be positive");
    if (!query.allFinite() || !positive.allFinite())
        throw std::runtime_error("non-finite input to contrastive_loss");
    if (positive.size() != query.size())
        throw std::invalid_argument("positive dimension mismatch");
    for (const auto& n : negatives) {
        if (n.size() != query.size()) throw std::invalid_argument("negative dimension mismatch");
        if (!n.allFinite()) throw std::runtime_error("non-finite input to contrastive_loss");
    }

    const double s_pos = query.dot(positive);
    std::vector<double> shifted(negatives.size());  // (s_i^- - s^+) / tau
    double m = 0.0;  // max(0, max shifted); 0 stands for the positive's own term
    for (size_t i = 0; i < negatives.size(); ++i) {
        shifted[i] = (query.dot(negatives[i]) - s_pos) / tau;
        m = std::max(m, shifted[i]);
    }
    double sum_exp = 0.0;
    for (double a : shifted) sum_exp += std::exp(a - m);
    const double pos_term = std::exp(-m);
    const double z = pos_term + sum_exp;

    LossResult result;
    // m == 0 means no negative exceeds the positive; log1p keeps tiny losses
    // positive instead of rounding log(1 + eps) to zero.
    result.loss = (m == 0.0) ? std::log1p(sum_exp) : m + std::log(z);
    result.positive_prob = pos_term / z;

    const double d_pos = (result.positive_prob - 1.0) / tau;
    result.grad_positive = d_pos * query;
    result.grad_query = d_pos * positive;
    result.grad_negatives.resize(negatives.size());
    for (size_t i = 0; i < negatives.size(); ++i) {
        const double p_i = std::exp(shifted[i] - m) / z;
        const double d_neg = p_i / tau;
        result.grad_negatives[i] = d_neg * query;
        result.grad_query += d_neg * negatives[i];
    }
    return result;
}

double example_loss(const Eigen::MatrixXd& p, const Eigen::MatrixXd& x, double tau,
                    Eigen::MatrixXd* grad_p) {
    if (p.rows() != p.cols()) throw std::invalid_argument("projection must be square");
    if (x.rows() != p.cols()) throw std::invalid_argument("example dimension mismatch");
    if (x.cols() < 2) throw std::invalid_argument("example needs query and positive columns");

    const long cols = x.cols();
    Eigen::MatrixXd y = p * x;
    Eigen::MatrixXd u(y.rows(), cols);
    Eigen::VectorXd norms(cols);
    for (long j = 0; j < cols; ++j) {
        norms[j] = std::max(y.col(j).norm(), 1e-12);
        u.col(j) = y.col(j) / norms[j];
    }

    std::vector<Eigen::VectorXd> negs;
    negs.reserve(static_cast<size_t>(cols - 2));
    for (long j = 2; j < cols; ++j) negs.push_back(u.col(j));
    LossResult lr = contrastive_loss(u.col(0), u.col(1), negs, tau);

    if (grad_p) {
        auto add_column = [&](long j, const Eigen::VectorXd& gu) {
            const Eigen::VectorXd uj = u.col(j);
            const Eigen::VectorXd gy = (gu - uj * uj.dot(gu)) / norms[j];
            grad_p->noalias() += gy * x.col(j).transpose();
        };
        add_column(0, lr.grad_query);
        add_column(1, lr.grad_positive);
        for (long j = 2; j < cols; ++j) add_column(j, lr.grad_negatives[static_cast<size_t>(j - 2)]);
    }
    return lr.loss;
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

TrainResult train_aligner(AlignerModel& model, const std::vector<TrainingExample>& examples,
                          const TrainConfig& config) {
    if (examples.empty()) throw std::invalid_argument("train_aligner requires examples");
    if (config.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (config.temperature <= 0.0) throw std::invalid_argument("temperature must be positive");
    if (config.epochs < 0) throw std::invalid_argument("epochs must be >= 0");
    const int dim = model.dim();

    // Raw embeddings are invariant under projection updates, so one pass
    // through the backend serves the whole run.
    std::vector<std::string> queries;
    queries.reserve(examples.size());
    std::vector<std::string> passages;
    for (const auto& ex : examples) {
        queries.push_back(query_text_for(ex));
        passages.push_back(ex.positive.wire());
        for (const auto& n : ex.negatives) passages.push_back(n.wire());
    }
    const auto q_raw = model.raw_embed_queries(queries);
    const auto p_raw = model.raw_embed_passages(passages);

    std::vector<Eigen::MatrixXd> x(examples.size());
    size_t pi = 0;
    for (size_t i = 0; i < examples.size(); ++i) {
        const long cols = 2 + static_cast<long>(examples[i].negatives.size());
        x[i].resize(dim, cols);
        x[i].col(0) = q_raw[i];
        x[i].col(1) = p_raw[pi++];
        for (long j = 2; j < cols; ++j) x[i].col(j) = p_raw[pi++];
    }

    Eigen::MatrixXd p = model.projection();
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::MatrixXd v = Eigen::MatrixXd::Zero(dim, dim);
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    TrainResult result;
    std::vector<size_t> order(examples.size());
    std::iota(order.begin(), order.end(), size_t{0});

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        deterministic_shuffle(order, config.seed + 0x9e3779b97f4a7c15ull * (static_cast<uint64_t>(epoch) + 1));
        double epoch_loss = 0.0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(config.batch_size)) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(config.batch_size));
            Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(dim, dim);
            for (size_t k = start; k < end; ++k)
                epoch_loss += example_loss(p, x[order[k]], config.temperature, &grad);
            grad /= static_cast<double>(end - start);

            ++result.steps;
            const double t = static_cast<double>(result.steps);
            m = beta1 * m + (1.0 - beta1) * grad;
            v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
            const double bc1 = 1.0 - std::pow(beta1, t);
            const double bc2 = 1.0 - std::pow(beta2, t);
            p.array() -= config.learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
            if (config.weight_decay > 0.0)
                p -= config.learning_rate * config.weight_decay * p;
        }
        result.epoch_losses.push_back(epoch_loss / static_cast<double>(examples.size()));
    }
    model.set_projection(std::move(p));
    return result;
}

double top1_accuracy(const AlignerModel& model, const std::vector<TrainingExample>& examples) {
    if (examples.empty()) throw std::invalid_argument("top1_accuracy requires examples");
    size_t correct = 0;
    for (const auto& ex : examples) {
        Eigen::VectorXd uq = model.encode_query(query_text_for(ex));
        std::vector<std::string> texts;
        texts.reserve(1 + ex.negatives.size());
        texts.push_back(ex.positive.wire());
        for (const auto& n : ex.negatives) texts.push_back(n.wire());
        auto encoded = model.encode_passages(texts);
        const double s_pos = uq.dot(encoded[0]);
        bool top = true;
        for (size_t i = 1; i < encoded.size(); ++i) {
            if (uq.dot(encoded[i]) >= s_pos) {
                top = false;
                break;
            }
        }
        if (top) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(examples.size());
}

// ---------------------------------------------------------------------------
// Silver training data
// ---------------------------------------------------------------------------

std::vector<TrainingExample> decompose_chain(const std::string& question,
                                             const std::vector<KnowledgeTriple>& full_chain,
                                             const std::vector<KnowledgeTriple>& negative_pool,
                                             int negatives, uint64_t seed) {
    if (full_chain.empty()) throw std::invalid_argument("decompose_chain requires a nonempty chain");
    if (negatives < 1) throw std::invalid_argument("decompose_chain requires negatives >= 1");

    std::vector<TrainingExample> out;
    uint64_t state = seed ^ fnv1a64(question);
    for (size_t len = 0; len < full_chain.size(); ++len) {
        const KnowledgeTriple& positive = full_chain[len];
        const std::string pos_key = positive.key();
        std::vector<size_t> eligible;
        for (size_t i = 0; i < negative_pool.size(); ++i)
            if (negative_pool[i].key() != pos_key) eligible.push_back(i);
        if (eligible.size() < static_cast<size_t>(negatives)) {
            log_warn("negative pool too small (" + std::to_string(eligible.size()) + " < " +
                     std::to_string(negatives) + ") for question '" + question +
                     "' prefix " + std::to_string(len) + "; example skipped");
            continue;
        }
        TrainingExample ex;
        ex.question = question;
        ex.partial_chain.assign(full_chain.begin(), full_chain.begin() + static_cast<long>(len));
        ex.positive = positive;
        for (int j = 0; j < negatives; ++j) {
            const size_t r = static_cast<size_t>(j) +
                             splitmix64(state) % (eligible.size() - static_cast<size_t>(j));
            std::swap(eligible[static_cast<size_t>(j)], eligible[r]);
            ex.negatives.push_back(negative_pool[eligible[static_cast<size_t>(j)]]);
        }
        out.push_back(std::move(ex));
    }
    return out;
}

std::vector<std::vector<KnowledgeTriple>> enumerate_candidate_chains(
    const std::string& question, const std::vector<KnowledgeTriple>& pool, int max_chains,
    int max_len) {
    std::vector<std::vector<KnowledgeTriple>> chains;
    if (max_chains < 1 || max_len < 1 || pool.empty()) return chains;

    const auto qtok = tokenize_simple(question);
    const std::unordered_set<std::string> question_tokens(qtok.begin(), qtok.end());
    auto overlaps_question = [&](const KnowledgeTriple& t) {
        for (const auto& tok : tokenize_simple(t.head))
            if (question_tokens.count(tok)) return true;
        for (const auto& tok : tokenize_simple(t.tail))
            if (question_tokens.count(tok)) return true;
        return false;
    };
    auto linked = [](const KnowledgeTriple& a, const KnowledgeTriple& b) {
        const std::string ah = normalized_key(a.head), at = normalized_key(a.tail);
        const std::string bh = normalized_key(b.head), bt = normalized_key(b.tail);
        return ah == bh || ah == bt || at == bh || at == bt;
    };

    std::vector<KnowledgeTriple> current;
    std::unordered_set<std::string> used;

    // Emits the current chain, then tries every extension; returns false once
    // the chain budget is spent.
    std::function<bool()> visit = [&]() -> bool {
        chains.push_back(current);
        if (chains.size() >= static_cast<size_t>(max_chains)) return false;
        if (current.size() >= static_cast<size_t>(max_len)) return true;
        for (const auto& t : pool) {
            const std::string key = t.key();
            if (used.count(key) || !linked(current.back(), t)) continue;
            current.push_back(t);
            used.insert(key);
            const bool keep_going = visit();
            used.erase(key);
            current.pop_back();
            if (!keep_going) return false;
        }
        return true;
    };

    std::unordered_set<std::string> seen_seeds;
    for (const auto& seed : pool) {
        if (!overlaps_question(seed)) continue;
        if (!seen_seeds.insert(seed.key()).second) continue;
        current = {seed};
        used = {seed.key()};
        if (!visit()) break;
    }
    return chains;
}

std::optional<std::vector<TrainingExample>> build_silver_data(
    const std::string& question, const std::vector<std::string>& gold_doc_ids,
    const std::vector<std::string>& gold_answers, ChatBackend& reader, const KgCorpus& kg,
    const PromptSet& prompts, const SilverConfig& config) {
    std::vector<KnowledgeTriple> pool;
    for (const auto& id : gold_doc_ids) {
        const auto& triples = kg.triples_for(id);
        pool.insert(pool.end(), triples.begin(), triples.end());
    }
    if (pool.empty()) {
        log_warn("no gold-document triples for question '" + question + "'; filtered");
        return std::nullopt;
    }

    const auto chains =
        enumerate_candidate_chains(question, pool, config.max_chains, config.max_chain_len);
    for (const auto& chain : chains) {
        std::string context;
        for (size_t i = 0; i < chain.size(); ++i) {
            if (i > 0) context += ", ";
            context += chain[i].wire();
        }
        ChatRequest request;
        request.user = render_prompt(prompts.reader, {{"context", context}, {"question", question}});
        const std::string answer = trim(reader.complete(request).text);
        if (em(answer, gold_answers) == 1) {
            auto examples = decompose_chain(question, chain, pool, config.negatives, config.seed);
            if (examples.empty()) return std::nullopt;
            return examples;
        }
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Training-data persistence
// ---------------------------------------------------------------------------

namespace {

KnowledgeTriple wire_to_triple(const std::string& wire, const std::string& where) {
    ParsedTriples parsed = parse_triples(wire, "");
    if (parsed.triples.size() != 1 || parsed.skipped != 0)
        throw std::runtime_error(where + ": invalid triple wire form '" + wire + "'");
    return parsed.triples[0];
}

}  // namespace

void save_training_data(const std::string& path, const std::vector<TrainingExample>& examples) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write training data file: " + path);
    for (const auto& ex : examples) {
        json chain = json::array();
        for (const auto& t : ex.partial_chain) chain.push_back(t.wire());
        json negs = json::array();
        for (const auto& t : ex.negatives) negs.push_back(t.wire());
        json rec = {{"question", ex.question},
                    {"partial_chain", std::move(chain)},
                    {"positive", ex.positive.wire()},
                    {"negatives", std::move(negs)}};
        out << rec.dump() << "\n";
    }
}

std::vector<TrainingExample> load_training_data(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open training data file: " + path);
    std::vector<TrainingExample> out;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const std::string where = path + ":" + std::to_string(line_no);
        json rec = json::parse(line, nullptr, false);
        if (rec.is_discarded() || !rec.is_object())
            throw std::runtime_error(where + ": invalid JSON line");
        try {
            TrainingExample ex;
            ex.question = rec.at("question").get<std::string>();
            for (const auto& w : rec.at("partial_chain"))
                ex.partial_chain.push_back(wire_to_triple(w.get<std::string>(), where));
            ex.positive = wire_to_triple(rec.at("positive").get<std::string>(), where);
            for (const auto& w : rec.at("negatives"))
                ex.negatives.push_back(wire_to_triple(w.get<std::string>(), where));
            out.push_back(std::move(ex));
        } catch (const json::exception& e) {
            throw std::runtime_error(where + ": " + e.what());
        }
    }
    return out;
}

}  // namespace kirag
