#include "dris/scores.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace dris {

std::string to_string(score_kind k) {
    switch (k) {
        case score_kind::rank_variance: return "rank-variance";
        case score_kind::el2n: return "el2n";
        case score_kind::consensus_mean_rank: return "consensus-mean-rank";
        case score_kind::grad_norm: return "grad-norm";
        case score_kind::loss: return "loss";
        case score_kind::forgetting: return "forgetting";
        case score_kind::aum: return "aum";
        case score_kind::hybrid: return "hybrid";
        case score_kind::uniform_mix: return "uniform-mix";
    }
    throw std::invalid_argument("unknown score kind");
}

score_kind score_kind_from_string(const std::string& s) {
    if (s == "rank-variance") return score_kind::rank_variance;
    if (s == "el2n") return score_kind::el2n;
    if (s == "consensus-mean-rank") return score_kind::consensus_mean_rank;
    if (s == "grad-norm") return score_kind::grad_norm;
    if (s == "loss") return score_kind::loss;
    if (s == "forgetting") return score_kind::forgetting;
    if (s == "aum") return score_kind::aum;
    if (s == "hybrid") return score_kind::hybrid;
    if (s == "uniform-mix") return score_kind::uniform_mix;
    throw std::invalid_argument("unknown score kind: " + s);
}

std::vector<double> normalized_ranks(const std::vector<double>& losses) {
    const std::size_t n = losses.size();
    if (n == 0) throw std::invalid_argument("normalized_ranks: empty input");
    for (double v : losses)
        if (!std::isfinite(v))
            throw std::invalid_argument("normalized_ranks: non-finite loss");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    // Ascending loss; equal losses keep ascending index order, so the output
    // is always an exact permutation of {1/n, ..., n/n}.
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return losses[a] < losses[b]; });
    std::vector<double> r(n);
    for (std::size_t pos = 0; pos < n; ++pos)
        r[order[pos]] = static_cast<double>(pos + 1) / static_cast<double>(n);
    return r;
}

RankMatrix make_rank_matrix(const std::vector<std::vector<double>>& per_proxy_losses,
                            int snapshot_epoch) {
    if (per_proxy_losses.empty())
        throw std::invalid_argument("make_rank_matrix: no proxies");
    RankMatrix rm;
    rm.k = per_proxy_losses.size();
    rm.n = per_proxy_losses.front().size();
    rm.snapshot_epoch = snapshot_epoch;
    rm.ranks.resize(rm.n * rm.k);
    for (std::size_t col = 0; col < rm.k; ++col) {
        if (per_proxy_losses[col].size() != rm.n)
            throw std::invalid_argument("make_rank_matrix: ragged loss vectors");
        const auto r = normalized_ranks(per_proxy_losses[col]);
        std::copy(r.begin(), r.end(), rm.ranks.begin() + static_cast<long>(col * rm.n));
        rm.proxy_ids.push_back("proxy-" + std::to_string(col));
    }
    return rm;
}

ScoreVector rank_variance(const RankMatrix& rm) {
    if (rm.k < 2)
        throw std::invalid_argument("rank_variance: need at least 2 proxies");
    ScoreVector s;
    s.kind = score_kind::rank_variance;
    s.values.resize(rm.n);
    for (std::size_t i = 0; i < rm.n; ++i) {
        double mean = 0.0;
        for (std::size_t c = 0; c < rm.k; ++c) mean += rm.at(i, c);
        mean /= static_cast<double>(rm.k);
        double var = 0.0;
        for (std::size_t c = 0; c < rm.k; ++c) {
            const double d = rm.at(i, c) - mean;
            var += d * d;
        }
        s.values[i] = var / static_cast<double>(rm.k);
    }
    return s;
}

ScoreVector el2n(const std::vector<TrainedModel>& proxies, const LabeledDataset& ds) {
    if (proxies.empty()) throw std::invalid_argument("el2n: no proxies");
    ScoreVector s;
    s.kind = score_kind::el2n;
    s.values.assign(ds.n, 0.0);
    std::vector<double> logits, probs;
    for (const auto& m : proxies) {
        if (m.spec.input_dim != ds.dim || m.spec.num_classes != ds.num_classes)
            throw std::invalid_argument("el2n: model/dataset shape mismatch");
        for (std::size_t i = 0; i < ds.n; ++i) {
            m.logits(ds.row(i), logits);
            const double zmax = *std::max_element(logits.begin(), logits.end());
            probs.resize(logits.size());
            double sum = 0.0;
            for (std::size_t c = 0; c < logits.size(); ++c) {
                probs[c] = std::exp(logits[c] - zmax);
                sum += probs[c];
            }
            double sq = 0.0;
            for (std::size_t c = 0; c < logits.size(); ++c) {
                const double e = probs[c] / sum -
                                 (static_cast<int>(c) == ds.labels[i] ? 1.0 : 0.0);
                sq += e * e;
            }
            s.values[i] += std::sqrt(sq);
        }
    }
    for (auto& v : s.values) v /= static_cast<double>(proxies.size());
    return s;
}

ScoreVector consensus_mean_rank(const RankMatrix& rm) {
    if (rm.k < 1) throw std::invalid_argument("consensus_mean_rank: empty matrix");
    ScoreVector s;
    s.kind = score_kind::consensus_mean_rank;
    s.values.resize(rm.n);
    for (std::size_t i = 0; i < rm.n; ++i) {
        double mean = 0.0;
        for (std::size_t c = 0; c < rm.k; ++c) mean += rm.at(i, c);
        s.values[i] = mean / static_cast<double>(rm.k);
    }
    return s;
}

ScoreVector forgetting_events(
    const std::vector<std::vector<std::uint8_t>>& correct_rows) {
    if (correct_rows.empty())
        throw std::invalid_argument("forgetting_events: no examples");
    const std::size_t t = correct_rows.front().size();
    if (t < 2)
        throw std::invalid_argument("forgetting_events: need at least 2 epochs");
    ScoreVector s;
    s.kind = score_kind::forgetting;
    s.values.resize(correct_rows.size());
    for (std::size_t i = 0; i < correct_rows.size(); ++i) {
        const auto& row = correct_rows[i];
        if (row.size() != t)
            throw std::invalid_argument("forgetting_events: ragged rows");
        int events = 0;
        for (std::size_t e = 1; e < t; ++e)
            if (row[e - 1] && !row[e]) ++events;
        s.values[i] = static_cast<double>(events);
    }
    return s;
}

ScoreVector aum(const std::vector<std::vector<double>>& margin_rows) {
    if (margin_rows.empty()) throw std::invalid_argument("aum: no examples");
    const std::size_t t = margin_rows.front().size();
    if (t < 1) throw std::invalid_argument("aum: need at least 1 epoch");
    ScoreVector s;
    s.kind = score_kind::aum;
    s.values.resize(margin_rows.size());
    for (std::size_t i = 0; i < margin_rows.size(); ++i) {
        const auto& row = margin_rows[i];
        if (row.size() != t) throw std::invalid_argument("aum: ragged rows");
        s.values[i] = std::accumulate(row.begin(), row.end(), 0.0) /
                      static_cast<double>(t);
    }
    return s;
}

ScoreVector hybrid(const ScoreVector& grad_norms, const ScoreVector& rank_var,
                   double beta) {
    if (grad_norms.values.size() != rank_var.values.size())
        throw std::invalid_argument("hybrid: length mismatch");
    if (!(beta >= 0.0 && beta <= 1.0))
        throw std::invalid_argument("hybrid: beta must be in [0,1]");
    ScoreVector s;
    s.kind = score_kind::hybrid;
    s.param = beta;
    s.values.resize(grad_norms.values.size());
    for (std::size_t i = 0; i < s.values.size(); ++i)
        s.values[i] = beta * grad_norms.values[i] + (1.0 - beta) * rank_var.values[i];
    return s;
}

ScoreVector mean_stat_score(const std::vector<PerSampleStats>& per_proxy,
                            score_kind kind) {
    if (kind != score_kind::grad_norm && kind != score_kind::loss)
        throw std::invalid_argument("mean_stat_score: kind must be grad-norm or loss");
    if (per_proxy.empty()) throw std::invalid_argument("mean_stat_score: no proxies");
    const std::size_t n = per_proxy.front().loss.size();
    ScoreVector s;
    s.kind = kind;
    s.values.assign(n, 0.0);
    for (const auto& st : per_proxy) {
        const auto& src = kind == score_kind::grad_norm ? st.grad_norm : st.loss;
        if (src.size() != n)
            throw std::invalid_argument("mean_stat_score: ragged proxy stats");
        for (std::size_t i = 0; i < n; ++i) s.values[i] += src[i];
    }
    for (auto& v : s.values) v /= static_cast<double>(per_proxy.size());
    return s;
}

ScoreVector add_scores(const ScoreVector& a, const ScoreVector& b) {
    if (a.values.size() != b.values.size())
        throw std::invalid_argument("add_scores: length mismatch");
    ScoreVector s = a;
    for (std::size_t i = 0; i < s.values.size(); ++i) s.values[i] += b.values[i];
    return s;
}

void save_scores(const ScoreVector& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "index,kind,param,value\n";
    char buf[64];
    for (std::size_t i = 0; i < s.values.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", s.values[i]);
        out << i << ',' << to_string(s.kind) << ',' << s.param << ',' << buf << '\n';
    }
}

ScoreVector load_scores(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != "index,kind,param,value")
        throw std::runtime_error("score file: bad header in " + path);
    ScoreVector s;
    bool first = true;
    std::size_t expect = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string idx, kind, param, value;
        if (!std::getline(ss, idx, ',') || !std::getline(ss, kind, ',') ||
            !std::getline(ss, param, ',') || !std::getline(ss, value))
            throw std::runtime_error("score file: malformed row in " + path);
        if (std::stoull(idx) != expect)
            throw std::runtime_error("score file: indices out of order in " + path);
        if (first) {
            s.kind = score_kind_from_string(kind);
            s.param = std::stod(param);
            first = false;
        }
        s.values.push_back(std::stod(value));
        ++expect;
    }
    if (first) throw std::runtime_error("score file: empty in " + path);
    return s;
}

void save_rank_matrix(const RankMatrix& rm, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "snapshot_epoch=" << rm.snapshot_epoch << '\n';
    for (std::size_t c = 0; c < rm.k; ++c)
        out << (c ? "," : "") << rm.proxy_ids[c];
    out << '\n';
    char buf[64];
    for (std::size_t i = 0; i < rm.n; ++i) {
        for (std::size_t c = 0; c < rm.k; ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g", rm.at(i, c));
            out << (c ? "," : "") << buf;
        }
        out << '\n';
    }
}

RankMatrix load_rank_matrix(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("snapshot_epoch=", 0) != 0)
        throw std::runtime_error("rank matrix: bad header in " + path);
    RankMatrix rm;
    rm.snapshot_epoch = std::stoi(line.substr(line.find('=') + 1));
    if (!std::getline(in, line))
        throw std::runtime_error("rank matrix: missing proxy ids in " + path);
    {
        std::istringstream ss(line);
        std::string id;
        while (std::getline(ss, id, ',')) rm.proxy_ids.push_back(id);
    }
    rm.k = rm.proxy_ids.size();
    if (rm.k == 0) throw std::runtime_error("rank matrix: no proxies in " + path);
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (row.size() != rm.k)
            throw std::runtime_error("rank matrix: ragged row in " + path);
        rows.push_back(std::move(row));
    }
    rm.n = rows.size();
    if (rm.n == 0) throw std::runtime_error("rank matrix: empty in " + path);
    rm.ranks.resize(rm.n * rm.k);
    for (std::size_t i = 0; i < rm.n; ++i)
        for (std::size_t c = 0; c < rm.k; ++c) rm.ranks[c * rm.n + i] = rows[i][c];
    return rm;
}

}  // namespace dris
