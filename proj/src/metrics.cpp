// Copyright (c) 2026 The flair-lab Authors
// SPDX-License-Identifier: Apache-2.0
#include "flair/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace flair {

double delta_dp(const std::vector<EvalRecord>& records) {
    long long n_pos = 0, n_neg = 0, acc_pos = 0, acc_neg = 0;
    for (const EvalRecord& r : records) {
        if (r.a == 1) {
            ++n_pos;
            acc_pos += r.yhat == 1;
        } else {
            ++n_neg;
            acc_neg += r.yhat == 1;
        }
    }
    if (n_pos == 0 || n_neg == 0)
        throw std::invalid_argument("delta_dp: undefined, sensitive group " +
                                    std::string(n_pos == 0 ? "a=1" : "a=-1") + " is absent");
    return std::fabs(static_cast<double>(acc_neg) / n_neg - static_cast<double>(acc_pos) / n_pos);
}

double auc_fair(const std::vector<EvalRecord>& records, bool half_tie_credit) {
    std::vector<double> pos, neg;
    for (const EvalRecord& r : records) (r.a == 1 ? pos : neg).push_back(r.score);
    if (pos.empty() || neg.empty())
        throw std::invalid_argument("auc_fair: undefined, sensitive group " +
                                    std::string(pos.empty() ? "a=1" : "a=-1") + " is absent");
    // count pairs via sorted scan instead of the quadratic double loop
    std::sort(neg.begin(), neg.end());
    double wins = 0.0;
    for (double s : pos) {
        const auto lo = std::lower_bound(neg.begin(), neg.end(), s);
        wins += static_cast<double>(lo - neg.begin());
        if (half_tie_credit) {
            const auto hi = std::upper_bound(neg.begin(), neg.end(), s);
            wins += 0.5 * static_cast<double>(hi - lo);
        }
    }
    return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

double consistency(const std::vector<EvalRecord>& records, int k) {
    if (k < 1) throw std::invalid_argument("consistency: k must be >= 1");
    std::map<int, std::vector<int>> by_domain;
    for (std::size_t i = 0; i < records.size(); ++i)
        by_domain[records[i].domain].push_back(static_cast<int>(i));
    for (const auto& [dom, idx] : by_domain)
        if (static_cast<int>(idx.size()) <= k)
            throw std::invalid_argument("consistency: domain " + std::to_string(dom) + " has " +
                                        std::to_string(idx.size()) +
                                        " records, needs more than k=" + std::to_string(k));
    double total = 0.0;
    for (const auto& [dom, idx] : by_domain) {
        for (int i : idx) {
            std::vector<std::pair<double, int>> dists;
            dists.reserve(idx.size() - 1);
            for (int j : idx) {
                if (j == i) continue;
                double s = 0.0;
                for (std::size_t f = 0; f < records[i].x.size(); ++f) {
                    const double d = records[i].x[f] - records[j].x[f];
                    s += d * d;
                }
                dists.emplace_back(s, j);
            }
            std::partial_sort(dists.begin(), dists.begin() + k, dists.end());
            double mean_yhat = 0.0;
            for (int t = 0; t < k; ++t) mean_yhat += records[dists[t].second].yhat;
            mean_yhat /= k;
            total += std::fabs(static_cast<double>(records[i].yhat) - mean_yhat);
        }
    }
    return 1.0 - total / static_cast<double>(records.size());
}

std::vector<EvalRecord> make_records(const std::vector<const Instance*>& insts,
                                     const PredictFn& predict) {
    std::vector<EvalRecord> out;
    out.reserve(insts.size());
    for (const Instance* p : insts) {
        const auto [yhat, score] = predict(*p);
        EvalRecord r;
        r.x = p->x;
        r.a = p->a;
        r.y = p->y;
        r.domain = p->domain;
        r.yhat = yhat;
        r.score = score;
        out.push_back(std::move(r));
    }
    return out;
}

MetricsReport evaluate(const std::vector<EvalRecord>& records, int k) {
    if (records.empty()) throw std::invalid_argument("evaluate: no records");
    MetricsReport report;
    report.consistency_k = k;
    std::map<int, std::vector<EvalRecord>> by_domain;
    for (const EvalRecord& r : records) by_domain[r.domain].push_back(r);

    for (const auto& [dom, recs] : by_domain) {
        DomainMetrics m;
        m.n = static_cast<int>(recs.size());
        long long correct = 0;
        for (const EvalRecord& r : recs) {
            correct += r.yhat == r.y;
            const std::string cell =
                "a=" + std::to_string(r.a) + ",y=" + std::to_string(r.y);
            m.cells[cell] += 1;
        }
        m.accuracy_pct = 100.0 * static_cast<double>(correct) / m.n;
        m.delta_dp = delta_dp(recs);
        m.auc_fair = auc_fair(recs);
        m.consistency = consistency(recs, k);
        report.per_domain[dom] = std::move(m);
    }

    const double nd = static_cast<double>(report.per_domain.size());
    for (const auto& [dom, m] : report.per_domain) {
        report.avg.accuracy_pct += m.accuracy_pct / nd;
        report.avg.delta_dp += m.delta_dp / nd;
        report.avg.auc_fair += m.auc_fair / nd;
        report.avg.consistency += m.consistency / nd;
        report.avg.n += m.n;
        for (const auto& [cell, c] : m.cells) report.avg.cells[cell] += c;
    }
    return report;
}

namespace {

nlohmann::json domain_to_json(const DomainMetrics& m) {
    nlohmann::json j;
    j["accuracy"] = m.accuracy_pct;
    j["delta_dp"] = m.delta_dp;
    j["auc_fair"] = m.auc_fair;
    j["consistency"] = m.consistency;
    j["n"] = m.n;
    j["cells"] = m.cells;
    return j;
}

DomainMetrics domain_from_json(const nlohmann::json& j) {
    DomainMetrics m;
    m.accuracy_pct = j.at("accuracy").get<double>();
    m.delta_dp = j.at("delta_dp").get<double>();
    m.auc_fair = j.at("auc_fair").get<double>();
    m.consistency = j.at("consistency").get<double>();
    m.n = j.at("n").get<int>();
    for (const auto& [cell, c] : j.at("cells").items()) m.cells[cell] = c.get<int>();
    return m;
}

}  // namespace

std::string report_to_json(const MetricsReport& report,
                           const std::map<std::string, std::string>& config_echo) {
    nlohmann::json j;
    j["domains"] = nlohmann::json::object();
    for (const auto& [dom, m] : report.per_domain)
        j["domains"][std::to_string(dom)] = domain_to_json(m);
    j["avg"] = domain_to_json(report.avg);
    j["config_echo"] = config_echo;
    j["config_echo"]["consistency_k"] = std::to_string(report.consistency_k);
    return j.dump(2);
}

MetricsReport report_from_json(const std::string& json_text) {
    const nlohmann::json j = nlohmann::json::parse(json_text);
    MetricsReport report;
    for (const auto& [dom, m] : j.at("domains").items())
        report.per_domain[std::stoi(dom)] = domain_from_json(m);
    report.avg = domain_from_json(j.at("avg"));
    if (j.at("config_echo").contains("consistency_k"))
        report.consistency_k = std::stoi(j["config_echo"]["consistency_k"].get<std::string>());
    return report;
}

}  // namespace flair
