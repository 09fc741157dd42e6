#include "era/bank.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "era/rng.hpp"

namespace era {

using ordered_json = nlohmann::ordered_json;

int default_n_list(std::size_t bank_size) {
    if (bank_size == 0) return 0;
    return static_cast<int>(std::ceil(std::sqrt(static_cast<double>(bank_size))));
}

int default_n_probe(int n_list, int cap) {
    const int by_fraction = static_cast<int>(std::ceil(n_list / 8.0));
    return std::max(1, std::min(by_fraction, cap));
}

KnowledgeBank::KnowledgeBank(int dim) : dim_(dim) {
    if (dim <= 0) throw std::invalid_argument("bank: dimension must be positive");
}

std::size_t KnowledgeBank::index_of(std::int64_t id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end())
        throw std::invalid_argument("bank: unknown entry id " + std::to_string(id));
    return it->second;
}

bool KnowledgeBank::contains(std::int64_t id) const { return by_id_.count(id) > 0; }

std::int64_t KnowledgeBank::next_id() const {
    std::int64_t mx = 0;
    for (const auto id : ids_) mx = std::max(mx, id);
    return mx + 1;
}

Vec3 KnowledgeBank::action_of(std::int64_t id) const { return actions_[index_of(id)]; }
double KnowledgeBank::reliability_of(std::int64_t id) const { return reliability_[index_of(id)]; }
const BankOrigin& KnowledgeBank::origin_of(std::int64_t id) const {
    return origins_[index_of(id)];
}

Eigen::VectorXd KnowledgeBank::latent_of(std::int64_t id) const {
    const std::size_t row = index_of(id);
    return Eigen::Map<const Eigen::VectorXd>(zdata_.data() + row * dim_, dim_);
}

void KnowledgeBank::insert(const BankEntry& entry) {
    if (entry.z.size() != dim_)
        throw std::invalid_argument("bank: latent dimension mismatch");
    if (!(entry.reliability > 0.0 && entry.reliability <= 1.0))
        throw std::invalid_argument("bank: reliability must be in (0, 1]");
    if (contains(entry.id))
        throw std::invalid_argument("bank: duplicate entry id " + std::to_string(entry.id));
    if (!entry.z.allFinite() || !entry.action.finite())
        throw std::invalid_argument("bank: non-finite entry");

    by_id_[entry.id] = ids_.size();
    ids_.push_back(entry.id);
    zdata_.insert(zdata_.end(), entry.z.data(), entry.z.data() + dim_);
    const double n = entry.z.norm();
    inv_norm_.push_back(n > 0.0 ? 1.0 / n : 0.0);
    actions_.push_back(entry.action);
    reliability_.push_back(entry.reliability);
    origins_.push_back(entry.origin);

    if (index_) {
        const int list = nearest_centroid(zdata_.data() + (ids_.size() - 1) * dim_);
        index_->lists[static_cast<std::size_t>(list)].push_back(entry.id);
        list_of_[entry.id] = list;
        ++inserts_since_build_;
    }
}

double KnowledgeBank::cosine(const Eigen::VectorXd& q, double q_inv_norm, std::size_t row) const {
    if (q_inv_norm == 0.0 || inv_norm_[row] == 0.0) return 0.0;
    const double dot =
        Eigen::Map<const Eigen::VectorXd>(zdata_.data() + row * dim_, dim_).dot(q);
    return dot * q_inv_norm * inv_norm_[row];
}

namespace {

// Keeps the k best (sim desc, id asc) with full-sort semantics.
struct TopK {
    explicit TopK(int k) : k_(static_cast<std::size_t>(std::max(0, k))) {}

    void offer(std::int64_t id, double sim) {
        if (k_ == 0) return;
        if (best_.size() == k_ && !better(sim, id, best_.back())) return;
        Candidate c{id, sim, 1.0, 0.0};
        auto pos = std::upper_bound(best_.begin(), best_.end(), c,
                                    [](const Candidate& a, const Candidate& b) {
                                        return a.sim > b.sim || (a.sim == b.sim && a.id < b.id);
                                    });
        best_.insert(pos, c);
        if (best_.size() > k_) best_.pop_back();
    }

    std::vector<Candidate> take() { return std::move(best_); }

  private:
    static bool better(double sim, std::int64_t id, const Candidate& worst) {
        return sim > worst.sim || (sim == worst.sim && id < worst.id);
    }
    std::size_t k_;
    std::vector<Candidate> best_;
};

}  // namespace

std::vector<Candidate> KnowledgeBank::search_exact(const Eigen::VectorXd& z, int k) const {
    if (empty()) throw std::runtime_error("bank: search on an empty bank");
    if (z.size() != dim_) throw std::invalid_argument("bank: query dimension mismatch");
    const double qn = z.norm();
    const double qin = qn > 0.0 ? 1.0 / qn : 0.0;

    TopK top(k);
    for (std::size_t row = 0; row < ids_.size(); ++row)
        top.offer(ids_[row], cosine(z, qin, row));
    auto result = top.take();
    for (auto& c : result) c.reliability = reliability_[index_of(c.id)];
    return result;
}

int KnowledgeBank::nearest_centroid(const double* z) const {
    const auto& idx = *index_;
    Eigen::Map<const Eigen::VectorXd> q(z, dim_);
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int c = 0; c < idx.n_list; ++c) {
        const double d = (idx.centroids.row(c).transpose() - q).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

void KnowledgeBank::build_index(int n_list, std::uint64_t seed) {
    const std::size_t n = size();
    if (n == 0) throw std::invalid_argument("bank: cannot index an empty bank");
    if (n_list <= 0 || static_cast<std::size_t>(n_list) > n)
        throw std::invalid_argument("bank: n_list must be in [1, bank size]");

    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const RowMajor> points(zdata_.data(), static_cast<Eigen::Index>(n), dim_);

    Rng rng = substream(seed, "kmeans");
    Eigen::MatrixXd centroids(n_list, dim_);

    // k-means++ seeding: D^2-weighted draws.
    std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
    const std::size_t first = rng.uniform_int(n);
    centroids.row(0) = points.row(static_cast<Eigen::Index>(first));
    for (int c = 1; c < n_list; ++c) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d2 =
                (points.row(static_cast<Eigen::Index>(i)) - centroids.row(c - 1)).squaredNorm();
            min_d2[i] = std::min(min_d2[i], d2);
            total += min_d2[i];
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            const double r = rng.uniform() * total;
            double acc = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += min_d2[i];
                if (acc >= r) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = rng.uniform_int(n);
        }
        centroids.row(c) = points.row(static_cast<Eigen::Index>(pick));
    }

    // Lloyd iterations; assignment via one GEMM per pass.
    std::vector<int> assign(n, 0);
    constexpr int kIterations = 20;
    for (int it = 0; it < kIterations; ++it) {
        const Eigen::VectorXd c2 = centroids.rowwise().squaredNorm();
        const Eigen::MatrixXd scores = points * centroids.transpose();  // n x n_list
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double best_d = c2(0) - 2.0 * scores(static_cast<Eigen::Index>(i), 0);
            for (int c = 1; c < n_list; ++c) {
                const double d = c2(c) - 2.0 * scores(static_cast<Eigen::Index>(i), c);
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            assign[i] = best;
        }

        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(n_list, dim_);
        std::vector<std::size_t> counts(static_cast<std::size_t>(n_list), 0);
        for (std::size_t i = 0; i < n; ++i) {
            sums.row(assign[i]) += points.row(static_cast<Eigen::Index>(i));
            ++counts[static_cast<std::size_t>(assign[i])];
        }
        for (int c = 0; c < n_list; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) {
                centroids.row(c) =
                    sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
            } else {
                // Reseed an empty cluster with the point farthest from its
                // centroid (lowest index on ties).
                std::size_t far = 0;
                double far_d = -1.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double d =
                        (points.row(static_cast<Eigen::Index>(i)) - centroids.row(assign[i]))
                            .squaredNorm();
                    if (d > far_d) {
                        far_d = d;
                        far = i;
                    }
                }
                centroids.row(c) = points.row(static_cast<Eigen::Index>(far));
                assign[far] = c;
            }
        }
    }

    IvfIndex idx;
    idx.n_list = n_list;
    idx.n_probe = default_n_probe(n_list);
    idx.centroids = std::move(centroids);
    idx.lists.assign(static_cast<std::size_t>(n_list), {});
    idx.trained_on_size = n;
    idx.build_seed = seed;
    index_ = std::move(idx);
    list_of_.clear();

    // Final assignment against the converged centroids.
    for (std::size_t i = 0; i < n; ++i) {
        const int c = nearest_centroid(zdata_.data() + i * dim_);
        index_->lists[static_cast<std::size_t>(c)].push_back(ids_[i]);
        list_of_[ids_[i]] = c;
    }
    index_seed_ = seed;
    inserts_since_build_ = 0;
}

void KnowledgeBank::build_default_index(std::uint64_t seed) {
    build_index(default_n_list(size()), seed);
}

bool KnowledgeBank::index_fresh() const {
    if (!index_) return false;
    return static_cast<double>(inserts_since_build_) <=
           0.10 * static_cast<double>(index_->trained_on_size);
}

const IvfIndex& KnowledgeBank::index() const {
    if (!index_) throw std::runtime_error("bank: no index built");
    return *index_;
}

void KnowledgeBank::set_n_probe(int n_probe) {
    if (!index_) throw std::runtime_error("bank: no index built");
    if (n_probe < 1 || n_probe > index_->n_list)
        throw std::invalid_argument("bank: n_probe must be in [1, n_list]");
    index_->n_probe = n_probe;
}

void KnowledgeBank::rebuild_index_if_stale() {
    if (index_ && !index_fresh()) build_default_index(index_seed_);
}

AnnResult KnowledgeBank::search_ann(const Eigen::VectorXd& z, int k) const {
    if (!index_) throw std::runtime_error("bank: search_ann without an index; build one first");
    if (!index_fresh())
        throw std::runtime_error(
            "bank: index is stale (" + std::to_string(inserts_since_build_) +
            " inserts since build); rebuild the index before ANN search");
    if (z.size() != dim_) throw std::invalid_argument("bank: query dimension mismatch");

    const auto& idx = *index_;
    std::vector<std::pair<double, int>> order(static_cast<std::size_t>(idx.n_list));
    for (int c = 0; c < idx.n_list; ++c)
        order[static_cast<std::size_t>(c)] = {(idx.centroids.row(c).transpose() - z).squaredNorm(),
                                              c};
    std::sort(order.begin(), order.end());

    const double qn = z.norm();
    const double qin = qn > 0.0 ? 1.0 / qn : 0.0;
    TopK top(k);
    const int probes = std::min(idx.n_probe, idx.n_list);
    std::size_t seen = 0;
    for (int p = 0; p < probes; ++p) {
        for (const auto id : idx.lists[static_cast<std::size_t>(order[static_cast<std::size_t>(p)].second)]) {
            top.offer(id, cosine(z, qin, index_of(id)));
            ++seen;
        }
    }
    AnnResult result;
    result.candidates = top.take();
    for (auto& c : result.candidates) c.reliability = reliability_[index_of(c.id)];
    result.underfilled = result.candidates.size() < static_cast<std::size_t>(k);
    (void)seen;
    return result;
}

void KnowledgeBank::penalize(std::int64_t id, double factor, double floor) {
    const std::size_t row = index_of(id);
    reliability_[row] = std::max(floor, reliability_[row] * factor);
}

void KnowledgeBank::prune(std::int64_t id) {
    const std::size_t row = index_of(id);
    ids_.erase(ids_.begin() + static_cast<std::ptrdiff_t>(row));
    zdata_.erase(zdata_.begin() + static_cast<std::ptrdiff_t>(row * dim_),
                 zdata_.begin() + static_cast<std::ptrdiff_t>((row + 1) * dim_));
    inv_norm_.erase(inv_norm_.begin() + static_cast<std::ptrdiff_t>(row));
    actions_.erase(actions_.begin() + static_cast<std::ptrdiff_t>(row));
    reliability_.erase(reliability_.begin() + static_cast<std::ptrdiff_t>(row));
    origins_.erase(origins_.begin() + static_cast<std::ptrdiff_t>(row));
    by_id_.erase(id);
    for (std::size_t i = row; i < ids_.size(); ++i) by_id_[ids_[i]] = i;

    if (index_) {
        auto it = list_of_.find(id);
        if (it != list_of_.end()) {
            auto& list = index_->lists[static_cast<std::size_t>(it->second)];
            list.erase(std::remove(list.begin(), list.end(), id), list.end());
            list_of_.erase(it);
        }
    }
}

namespace {

ordered_json vec3_json(const Vec3& v) { return ordered_json::array({v.x, v.y, v.z}); }

const char* source_name(EntrySource s) {
    return s == EntrySource::Expert ? "expert" : "online";
}

EntrySource source_from(const std::string& s) {
    if (s == "expert") return EntrySource::Expert;
    if (s == "online") return EntrySource::Online;
    throw std::runtime_error("unknown entry source: " + s);
}

}  // namespace

void KnowledgeBank::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("bank: cannot open " + path.string() + " for writing");
    ordered_json header;
    header["version"] = 1;
    header["d"] = dim_;
    header["sim"] = "cosine";
    header["seed"] = index_seed_;
    out << header.dump() << '\n';
    for (std::size_t row = 0; row < ids_.size(); ++row) {
        ordered_json j;
        j["id"] = ids_[row];
        j["z"] = std::vector<double>(zdata_.begin() + static_cast<std::ptrdiff_t>(row * dim_),
                                     zdata_.begin() + static_cast<std::ptrdiff_t>((row + 1) * dim_));
        j["a"] = vec3_json(actions_[row]);
        j["r"] = reliability_[row];
        j["origin"] = {{"episode", origins_[row].episode},
                       {"step", origins_[row].step},
                       {"source", source_name(origins_[row].source)}};
        out << j.dump() << '\n';
    }
}

KnowledgeBank KnowledgeBank::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("bank: cannot open " + path.string());
    std::string line;
    int lineno = 0;

    auto parse = [&](const std::string& text) {
        try {
            return ordered_json::parse(text);
        } catch (const std::exception& e) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                                     ": malformed bank line: " + e.what());
        }
    };

    if (!std::getline(in, line)) return KnowledgeBank(32);  // empty file -> empty bank
    ++lineno;
    const auto header = parse(line);
    if (!header.contains("version") || header["version"].get<int>() != 1)
        throw std::runtime_error(path.string() + ":1: unsupported bank version");
    KnowledgeBank bank(header.value("d", 32));
    const std::uint64_t seed = header.value("seed", std::uint64_t{0});

    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto j = parse(line);
        try {
            BankEntry e;
            e.id = j.at("id").get<std::int64_t>();
            const auto zv = j.at("z").get<std::vector<double>>();
            e.z = Eigen::Map<const Eigen::VectorXd>(zv.data(),
                                                    static_cast<Eigen::Index>(zv.size()));
            const auto av = j.at("a").get<std::vector<double>>();
            e.action = {av.at(0), av.at(1), av.at(2)};
            e.reliability = j.at("r").get<double>();
            const auto& o = j.at("origin");
            e.origin = {o.at("episode").get<int>(), o.at("step").get<int>(),
                        source_from(o.at("source").get<std::string>())};
            bank.insert(e);
        } catch (const std::exception& e) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " +
                                     e.what());
        }
    }
    bank.index_seed_ = seed;
    if (!bank.empty()) bank.build_default_index(seed);
    return bank;
}

std::vector<Candidate> compute_weights(std::vector<Candidate> candidates,
                                       const RetrievalParams& params) {
    if (candidates.empty())
        throw std::invalid_argument("compute_weights: empty candidate set");
    if (params.tau <= 0.0) throw std::invalid_argument("compute_weights: tau must be > 0");

    double max_logit = -std::numeric_limits<double>::infinity();
    std::vector<double> logits(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (!(candidates[i].reliability > 0.0))
            throw std::invalid_argument("compute_weights: reliability must be > 0");
        logits[i] = candidates[i].sim / params.tau + params.alpha * std::log(candidates[i].reliability);
        max_logit = std::max(max_logit, logits[i]);
    }
    double total = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        candidates[i].weight = std::exp(logits[i] - max_logit);
        total += candidates[i].weight;
    }
    for (auto& c : candidates) c.weight /= total;
    return candidates;
}

}  // namespace era
