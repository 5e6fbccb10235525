#pragma once

#include <Eigen/Core>

#include <iosfwd>
#include <string>

namespace fleetrl {

/// Hourly electricity buy prices. Sell prices are derived as
/// `sell_ratio * buy`. A series used as a repeating daily profile is
/// indexed modulo its length, so forecast windows never run off the end.
struct PriceSeries {
  Eigen::VectorXd buy;
  double sell_ratio = 0.5;

  Eigen::Index hours() const { return buy.size(); }

  double buy_at(Eigen::Index k) const { return buy[wrap(k)]; }
  double sell_at(Eigen::Index k) const { return sell_ratio * buy[wrap(k)]; }

  Eigen::Index wrap(Eigen::Index k) const {
    const Eigen::Index n = buy.size();
    const Eigen::Index m = k % n;
    return m < 0 ? m + n : m;
  }
};

/// One forecast window: the next N (buy, sell) price pairs.
struct PriceWindow {
  Eigen::VectorXd buy;
  Eigen::VectorXd sell;

  Eigen::Index horizon() const { return buy.size(); }
};

/// Raised when a price file cannot be parsed or fails validation.
/// The message names the offending row.
class PriceError : public std::runtime_error {
 public:
  explicit PriceError(const std::string& what) : std::runtime_error(what) {}
};

/// Loads a CSV with schema `hour_index,buy_price` (one header line).
/// Rows must be contiguous ascending hours starting at 0; prices must be
/// nonnegative. Throws PriceError otherwise.
PriceSeries load_csv(const std::string& path, double sell_ratio = 0.5);

/// Same as load_csv but reading from a stream; `name` is used in messages.
PriceSeries parse_csv(std::istream& in, const std::string& name,
                      double sell_ratio = 0.5);

/// Price pairs for hours [k, k+N), wrapping modulo the series length.
PriceWindow forecast_window(const PriceSeries& series, Eigen::Index k,
                            Eigen::Index horizon);

/// Deterministic 24-hour double-peaked profile: `base` plus two raised-cosine
/// bumps of height `amplitude` and half-width 3 h centred at the peak hours
/// (circular hour distance). Requires base > amplitude >= 0.
PriceSeries synth_daily(double base, double amplitude, int peak_hour,
                        int second_peak_hour, double sell_ratio = 0.5);

/// Summary statistics used by the `prices validate` CLI subcommand.
struct PriceSummary {
  Eigen::Index hours = 0;
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
};

PriceSummary summarize(const PriceSeries& series);

}  // namespace fleetrl
