#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "era/vec3.hpp"

namespace era {

enum class EntrySource { Expert, Online };

struct BankOrigin {
    int episode = 0;
    int step = 0;
    EntrySource source = EntrySource::Expert;
};

struct BankEntry {
    std::int64_t id = 0;
    Eigen::VectorXd z;
    Vec3 action;          // stored maneuver, m/s
    double reliability = 1.0;  // in (0, 1]
    BankOrigin origin;
};

struct Candidate {
    std::int64_t id = 0;
    double sim = 0.0;
    double reliability = 1.0;
    double weight = 0.0;
};

struct RetrievalParams {
    int k = 8;
    double tau = 0.1;    // similarity temperature
    double alpha = 1.0;  // reliability weight
};

struct AnnResult {
    std::vector<Candidate> candidates;
    bool underfilled = false;  // probed lists yielded fewer than k entries
};

// Inverted-file coarse quantizer: k-means centroids with per-centroid id
// lists; queries probe only the nearest n_probe lists.
struct IvfIndex {
    int n_list = 0;
    int n_probe = 1;
    Eigen::MatrixXd centroids;  // n_list x d
    std::vector<std::vector<std::int64_t>> lists;
    std::size_t trained_on_size = 0;
    std::uint64_t build_seed = 0;
};

// Sizing defaults. n_probe follows n_list/8 for small banks but is capped so
// probed work grows sublinearly with the bank.
int default_n_list(std::size_t bank_size);
int default_n_probe(int n_list, int cap = 12);

class KnowledgeBank {
  public:
    explicit KnowledgeBank(int dim = 32);

    int dim() const { return dim_; }
    std::size_t size() const { return ids_.size(); }
    bool empty() const { return ids_.empty(); }

    // Entry becomes retrievable by exact search immediately and is assigned
    // to its nearest centroid when an index exists. Throws on duplicate id,
    // reliability outside (0, 1], or a dimension mismatch.
    void insert(const BankEntry& entry);

    bool contains(std::int64_t id) const;
    std::int64_t next_id() const;  // max id + 1

    Vec3 action_of(std::int64_t id) const;
    double reliability_of(std::int64_t id) const;
    Eigen::VectorXd latent_of(std::int64_t id) const;
    const BankOrigin& origin_of(std::int64_t id) const;

    // Top-k by cosine similarity; ties broken by lower id. A zero query (or
    // zero stored vector) scores 0 against everything.
    std::vector<Candidate> search_exact(const Eigen::VectorXd& z, int k) const;

    // k-means (k-means++ seeding, 20 Lloyd iterations) over all stored
    // latents. Deterministic for a fixed seed.
    void build_index(int n_list, std::uint64_t seed);
    void build_default_index(std::uint64_t seed);

    // Probes the n_probe nearest centroid lists. Throws if the index is
    // missing or stale (inserts since build exceed 10% of the indexed size).
    AnnResult search_ann(const Eigen::VectorXd& z, int k) const;

    bool index_built() const { return index_.has_value(); }
    bool index_fresh() const;
    const IvfIndex& index() const;
    void set_n_probe(int n_probe);
    void rebuild_index_if_stale();

    void penalize(std::int64_t id, double factor = 0.9, double floor = 0.05);
    void prune(std::int64_t id);

    // JSONL: header {"version","d","sim","seed"} then one entry per line.
    // Round-trips byte-exactly; the index is rebuilt from the stored seed.
    void save(const std::filesystem::path& path) const;
    static KnowledgeBank load(const std::filesystem::path& path);

    std::uint64_t index_seed() const { return index_seed_; }
    std::size_t inserts_since_build() const { return inserts_since_build_; }

    // Row-major latent storage, exposed for benchmarking and tests.
    const std::vector<double>& latent_data() const { return zdata_; }
    const std::vector<std::int64_t>& ids() const { return ids_; }

  private:
    std::size_t index_of(std::int64_t id) const;  // throws on unknown id
    double cosine(const Eigen::VectorXd& q, double q_inv_norm, std::size_t row) const;
    int nearest_centroid(const double* z) const;

    int dim_;
    std::vector<std::int64_t> ids_;
    std::vector<double> zdata_;     // size() * dim_, row-major
    std::vector<double> inv_norm_;  // 1/|z| (0 for the zero vector)
    std::vector<Vec3> actions_;
    std::vector<double> reliability_;
    std::vector<BankOrigin> origins_;
    std::unordered_map<std::int64_t, std::size_t> by_id_;

    std::optional<IvfIndex> index_;
    std::unordered_map<std::int64_t, int> list_of_;  // id -> inverted list
    std::uint64_t index_seed_ = 0;
    std::size_t inserts_since_build_ = 0;
};

// Softmax of sim/tau + alpha*log(r) over the candidate set (anything outside
// the set implicitly has weight zero). Throws if any reliability is <= 0.
std::vector<Candidate> compute_weights(std::vector<Candidate> candidates,
                                       const RetrievalParams& params);

}  // namespace era
