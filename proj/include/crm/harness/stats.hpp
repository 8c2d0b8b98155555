#pragma once

#include <span>
#include <vector>

namespace crm {

double mean(std::span<const double> xs);
// Standard error of the mean (sample stddev / sqrt(n)); 0 for n < 2.
double standard_error(std::span<const double> xs);

// Ranks starting at 1, ties get the average of their positions.
std::vector<double> average_ranks(std::span<const double> xs);
double pearson(std::span<const double> xs, std::span<const double> ys);
double spearman(std::span<const double> xs, std::span<const double> ys);

struct PairedTTest {
  std::size_t n = 0;
  double mean_diff = 0.0;
  double sd_diff = 0.0;
  double t = 0.0;
  double p_greater = 1.0;  // one-sided p-value for mean(a - b) > 0
};

PairedTTest paired_t_test(std::span<const double> a, std::span<const double> b);

}  // namespace crm
