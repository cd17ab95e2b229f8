#pragma once

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kirag/backends.hpp"
#include "kirag/corpus.hpp"
#include "kirag/prompts.hpp"
#include "kirag/types.hpp"

namespace kirag {

// ---------------------------------------------------------------------------
// Model: trainable projection head over a frozen embedding backend.
// f(x) = normalize(P * embed(x)), P initialized to identity so the untrained
// model scores exactly like the raw encoder.
// ---------------------------------------------------------------------------

class AlignerModel {
public:
    explicit AlignerModel(std::shared_ptr<EmbeddingBackend> backend, PrefixConfig prefixes = {});

    int dim() const { return static_cast<int>(projection_.rows()); }
    const Eigen::MatrixXd& projection() const { return projection_; }
    void set_projection(Eigen::MatrixXd p);
    bool is_identity() const;

    EmbeddingBackend& backend() const { return *backend_; }
    std::shared_ptr<EmbeddingBackend> backend_ptr() const { return backend_; }
    const PrefixConfig& prefixes() const { return prefixes_; }

    /// Raw (pre-projection) embeddings with the role prefix applied.
    std::vector<Eigen::VectorXd> raw_embed_queries(const std::vector<std::string>& texts) const;
    std::vector<Eigen::VectorXd> raw_embed_passages(const std::vector<std::string>& texts) const;

    /// Projected + normalized encodings.
    Eigen::VectorXd encode_query(const std::string& text) const;
    std::vector<Eigen::VectorXd> encode_passages(const std::vector<std::string>& texts) const;

    /// Inner-product scores against the query; input order preserved; triples
    /// are embedded in wire form.
    std::vector<ScoredTriple> score_triples(const std::string& query_text,
                                            const std::vector<KnowledgeTriple>& triples,
                                            int iteration = 0) const;
    std::vector<ScoredUnit> score_units(const std::string& query_text,
                                        const std::vector<ChainUnit>& units,
                                        int iteration = 0) const;

    /// JSON model file: dim, row-major projection, backend metadata, config
    /// fingerprint. Loading checks the backend dimension.
    void save(const std::string& path, const std::string& config_fingerprint = "") const;
    static AlignerModel load(const std::string& path, std::shared_ptr<EmbeddingBackend> backend);

    /// Applies projection + normalization to one raw vector.
    Eigen::VectorXd project(const Eigen::VectorXd& raw) const;

private:
    std::shared_ptr<EmbeddingBackend> backend_;
    PrefixConfig prefixes_;
    Eigen::MatrixXd projection_;
};

/// Top-N by score descending; ties keep first appearance (stable).
std::vector<ScoredTriple> select_candidates(std::vector<ScoredTriple> scored, int n);
std::vector<ScoredUnit> select_candidates(std::vector<ScoredUnit> scored, int n);

// ---------------------------------------------------------------------------
// Contrastive objective
// ---------------------------------------------------------------------------

struct LossResult {
    double loss = 0.0;
    Eigen::VectorXd grad_query;
    Eigen::VectorXd grad_positive;
    std::vector<Eigen::VectorXd> grad_negatives;
    double positive_prob = 0.0;
};

/// loss = -log( exp(s+/tau) / (exp(s+/tau) + sum_i exp(s_i-/tau)) ) with
/// s = inner product; computed with log-sum-exp shifting so tau=0.01 neither
/// overflows nor collapses small losses to zero. Gradients are with respect
/// to the input vectors.
LossResult contrastive_loss(const Eigen::VectorXd& query, const Eigen::VectorXd& positive,
                            const std::vector<Eigen::VectorXd>& negatives, double tau);

/// Loss of one training example given projection P and raw embedding columns
/// X = [query, positive, negatives...]; every column flows through
/// normalize(P * x). If grad_p is non-null the analytic d(loss)/dP is added
/// into it. This is the exact function the trainer steps on.
double example_loss(const Eigen::MatrixXd& p, const Eigen::MatrixXd& x, double tau,
                    Eigen::MatrixXd* grad_p = nullptr);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
    double learning_rate = 2e-5;
    double weight_decay = 0.01;
    int batch_size = 64;
    int negatives = 7;
    double temperature = 0.01;
    int epochs = 10;
    uint64_t seed = 42;
};

struct TrainResult {
    std::vector<double> epoch_losses;
    size_t steps = 0;
};

/// Adam (decoupled weight decay) on the projection matrix only; the backend
/// stays frozen. Examples are shuffled per epoch from the config seed; the
/// query text is format_iterative_query(question, partial_chain).
TrainResult train_aligner(AlignerModel& model, const std::vector<TrainingExample>& examples,
                          const TrainConfig& config);

/// Positive-ranked-first accuracy of a model over examples; the evaluation
/// used for held-out checks.
double top1_accuracy(const AlignerModel& model, const std::vector<TrainingExample>& examples);

// ---------------------------------------------------------------------------
// Silver training data
// ---------------------------------------------------------------------------

/// One example per chain prefix (length 0..len-1); positive is the next
/// triple; negatives are drawn without replacement from the pool, excluding
/// the positive by normalized equality. Prefixes whose eligible pool is
/// smaller than `negatives` are skipped with a warning.
std::vector<TrainingExample> decompose_chain(const std::string& question,
                                             const std::vector<KnowledgeTriple>& full_chain,
                                             const std::vector<KnowledgeTriple>& negative_pool,
                                             int negatives, uint64_t seed);

/// Candidate chains over a triple pool: seeds share a token with the
/// question; consecutive triples share a head/tail entity case-insensitively;
/// chains are emitted in DFS order (each visited prefix is a candidate),
/// without duplicate triples, capped by max_chains and max_len.
std::vector<std::vector<KnowledgeTriple>> enumerate_candidate_chains(
    const std::string& question, const std::vector<KnowledgeTriple>& pool, int max_chains,
    int max_len);

struct SilverConfig {
    int negatives = 7;
    int max_chains = 5;
    int max_chain_len = 4;
    uint64_t seed = 42;
};

/// Builds training examples for one question: enumerate candidate chains over
/// the gold documents' triples, ask the reader with each chain as context,
/// and decompose the first chain whose answer matches gold (EM). Returns
/// nullopt when every chain fails (the question is filtered out).
std::optional<std::vector<TrainingExample>> build_silver_data(
    const std::string& question, const std::vector<std::string>& gold_doc_ids,
    const std::vector<std::string>& gold_answers, ChatBackend& reader, const KgCorpus& kg,
    const PromptSet& prompts, const SilverConfig& config);

/// Training-data persistence: line-delimited JSON with triples in wire form.
void save_training_data(const std::string& path, const std::vector<TrainingExample>& examples);
std::vector<TrainingExample> load_training_data(const std::string& path);

}  // namespace kirag
