// Copyright (c) 2026 The flair-lab Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "flair/datagen.hpp"

namespace flair {

struct EvalRecord {
    std::vector<double> x;
    int a = -1;
    int y = 0;
    int domain = 0;
    int yhat = 0;
    double score = 0.5;
};

/// |P(yhat=1 | a=-1) - P(yhat=1 | a=1)|. Throws when a group is absent.
double delta_dp(const std::vector<EvalRecord>& records);

/// Probability that a positive-group score strictly exceeds a
/// negative-group score. Ties count 0 by default; half_tie_credit gives
/// them 0.5.
double auc_fair(const std::vector<EvalRecord>& records, bool half_tie_credit = false);

/// 1 - mean |yhat_i - mean yhat over the k nearest same-domain neighbors|,
/// Euclidean distance on raw features, self excluded. Throws when any
/// domain has <= k records.
double consistency(const std::vector<EvalRecord>& records, int k);

struct DomainMetrics {
    double accuracy_pct = 0.0;
    double delta_dp = 0.0;
    double auc_fair = 0.0;
    double consistency = 0.0;
    int n = 0;
    std::map<std::string, int> cells;  // counts per (a, y) cell
};

struct MetricsReport {
    std::map<int, DomainMetrics> per_domain;
    DomainMetrics avg;  // unweighted mean across domains; n and cells summed
    int consistency_k = 5;
};

using PredictFn = std::function<std::pair<int, double>(const Instance&)>;  // (yhat, score)

std::vector<EvalRecord> make_records(const std::vector<const Instance*>& insts,
                                     const PredictFn& predict);

MetricsReport evaluate(const std::vector<EvalRecord>& records, int k);

/// Report JSON: {"domains": {...}, "avg": {...}, "config_echo": {...}}.
std::string report_to_json(const MetricsReport& report,
                           const std::map<std::string, std::string>& config_echo);
MetricsReport report_from_json(const std::string& json_text);

}  // namespace flair
