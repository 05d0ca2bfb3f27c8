#ifndef DRIS_SCORES_HPP
#define DRIS_SCORES_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "dris/dataset.hpp"
#include "dris/model.hpp"

namespace dris {

enum class score_kind {
    rank_variance,
    el2n,
    consensus_mean_rank,
    grad_norm,
    loss,
    forgetting,
    aum,
    hybrid,       // param = beta
    uniform_mix,  // param = k
};

std::string to_string(score_kind k);
score_kind score_kind_from_string(const std::string& s);

struct ScoreVector {
    std::vector<double> values;
    score_kind kind = score_kind::rank_variance;
    double param = 0.0;  // beta for hybrid, k for uniform_mix
};

// N x K column-major rank matrix; every column is a permutation of
// {1/N, ..., N/N}.
struct RankMatrix {
    std::vector<double> ranks;  // column-major: ranks[k*n + i]
    std::vector<std::string> proxy_ids;
    int snapshot_epoch = 0;
    std::size_t n = 0;
    std::size_t k = 0;

    double at(std::size_t i, std::size_t col) const { return ranks[col * n + i]; }
};

// Ascending-loss ordinal ranks divided by N; ties broken by ascending index,
// so the result is always an exact permutation of {1/N, ..., N/N}.
// Throws std::invalid_argument on non-finite losses.
std::vector<double> normalized_ranks(const std::vector<double>& losses);

RankMatrix make_rank_matrix(const std::vector<std::vector<double>>& per_proxy_losses,
                            int snapshot_epoch);

// Biased sample variance across the K ranks of each example:
// sigma2_i = (1/K) sum_k (r_ik - rbar_i)^2. Requires K >= 2.
ScoreVector rank_variance(const RankMatrix& rm);

// Mean over proxies of || softmax(logits) - onehot(y) ||_2.
ScoreVector el2n(const std::vector<TrainedModel>& proxies, const LabeledDataset& ds);

ScoreVector consensus_mean_rank(const RankMatrix& rm);

// Count of true->false transitions along each row; rows from several proxies
// may be summed by repeated calls (see sum_scores) or by passing concatenated
// trajectories per proxy and adding. T >= 2 required.
ScoreVector forgetting_events(const std::vector<std::vector<std::uint8_t>>& correct_rows);

// Per-example mean margin across a single run's T epochs. T >= 1.
ScoreVector aum(const std::vector<std::vector<double>>& margin_rows);

// Elementwise beta*grad_norm + (1-beta)*rank_var.
ScoreVector hybrid(const ScoreVector& grad_norms, const ScoreVector& rank_var,
                   double beta);

ScoreVector mean_stat_score(const std::vector<PerSampleStats>& per_proxy,
                            score_kind kind);  // grad_norm or loss

ScoreVector add_scores(const ScoreVector& a, const ScoreVector& b);

void save_scores(const ScoreVector& s, const std::string& path);
ScoreVector load_scores(const std::string& path);
void save_rank_matrix(const RankMatrix& rm, const std::string& path);
RankMatrix load_rank_matrix(const std::string& path);

}  // namespace dris

#endif
