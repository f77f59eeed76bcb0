#pragma once

#include <string>
#include <vector>

#include "fewstep/trainer.hpp"

namespace fewstep {

// One (grid schedule, solver, mode, NFE) cell. Unavailable numbers are NaN
// and serialize as empty CSV fields.
struct ResultRow {
    std::string schedule;
    std::string solver;
    std::string mode;
    int nfe = 0;
    std::string status;  // ok | infeasible | failed
    double mean_error;
    double median_error;
    double max_error;
    double mean_rel_error;
    int nfe_used = 0;
    double wall_ms;
    double baseline_mean_error;
    double delta_mean_error;
    std::string message;

    ResultRow();
};

const std::vector<std::string>& result_columns();

class ResultTable {
public:
    std::vector<ResultRow> rows;

    void write_csv(const std::string& path) const;
    std::string to_csv() const;
    static ResultTable read_csv(const std::string& path);
    static ResultTable parse_csv(const std::string& text);
    // Fixed-width table for terminals.
    std::string to_text() const;
};

void write_history_csv(const std::string& path, const std::vector<HistoryRow>& history);

}  // namespace fewstep
