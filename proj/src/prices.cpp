#include "fleetrl/prices.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <vector>

namespace fleetrl {

PriceSeries load_csv(const std::string& path, double sell_ratio) {
  std::ifstream in(path);
  if (!in) {
    throw PriceError("cannot open price file: " + path);
  }
  return parse_csv(in, path, sell_ratio);
}

PriceSeries parse_csv(std::istream& in, const std::string& name,
                      double sell_ratio) {
  std::string line;
  if (!std::getline(in, line)) {
    throw PriceError(name + ": empty file");
  }
  // Header line is mandatory; tolerate surrounding whitespace.
  std::vector<double> prices;
  Eigen::Index row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    std::istringstream ss(line);
    std::string hour_str, price_str;
    if (!std::getline(ss, hour_str, ',') || !std::getline(ss, price_str)) {
      throw PriceError(name + ": malformed row " + std::to_string(row + 2) +
                       ": '" + line + "'");
    }
    long hour = 0;
    double price = 0.0;
    try {
      hour = std::stol(hour_str);
      price = std::stod(price_str);
    } catch (const std::exception&) {
      throw PriceError(name + ": malformed row " + std::to_string(row + 2) +
                       ": '" + line + "'");
    }
    if (hour != row) {
      if (hour > row) {
        throw PriceError(name + ": gap at hour " + std::to_string(row));
      }
      throw PriceError(name + ": duplicate or out-of-order hour " +
                       std::to_string(hour));
    }
    if (price < 0.0) {
      throw PriceError(name + ": negative price at hour " +
                       std::to_string(hour));
    }
    prices.push_back(price);
    ++row;
  }
  if (prices.size() < 24) {
    throw PriceError(name + ": need at least 24 hourly rows, got " +
                     std::to_string(prices.size()));
  }
  PriceSeries series;
  series.buy = Eigen::Map<const Eigen::VectorXd>(prices.data(),
                                                 Eigen::Index(prices.size()));
  series.sell_ratio = sell_ratio;
  return series;
}

PriceWindow forecast_window(const PriceSeries& series, Eigen::Index k,
                            Eigen::Index horizon) {
  if (horizon < 1) {
    throw PriceError("forecast horizon must be >= 1");
  }
  PriceWindow window;
  window.buy.resize(horizon);
  window.sell.resize(horizon);
  for (Eigen::Index j = 0; j < horizon; ++j) {
    window.buy[j] = series.buy_at(k + j);
    window.sell[j] = series.sell_at(k + j);
  }
  return window;
}

namespace {

// Raised-cosine bump of unit height and given half-width, on circular
// hour distance within a 24-hour day.
double bump(double hour, double center, double half_width) {
  double d = std::abs(hour - center);
  d = std::min(d, 24.0 - d);
  if (d >= half_width) {
    return 0.0;
  }
  const double c = std::cos(0.5 * std::numbers::pi * d / half_width);
  return c * c;
}

}  // namespace

PriceSeries synth_daily(double base, double amplitude, int peak_hour,
                        int second_peak_hour, double sell_ratio) {
  if (!(base > amplitude && amplitude >= 0.0)) {
    throw PriceError("synth_daily requires base > amplitude >= 0");
  }
  constexpr double kHalfWidth = 3.0;
  PriceSeries series;
  series.buy.resize(24);
  for (int h = 0; h < 24; ++h) {
    series.buy[h] = base + amplitude * (bump(h, peak_hour, kHalfWidth) +
                                        bump(h, second_peak_hour, kHalfWidth));
  }
  series.sell_ratio = sell_ratio;
  return series;
}

PriceSummary summarize(const PriceSeries& series) {
  PriceSummary s;
  s.hours = series.hours();
  s.min = series.buy.minCoeff();
  s.max = series.buy.maxCoeff();
  s.mean = series.buy.mean();
  return s;
}

}  // namespace fleetrl
