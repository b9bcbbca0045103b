// Independent reference computations used to derive expected values. They
// deliberately share no code with the library.
#pragma once

#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace ptk_test {

/// Plain long-double entropy: -sum p log2 p over the OS list plus binary
/// entropies of every Bernoulli slot. No quantization.
inline long double naive_entropy(const std::vector<double>& os, const std::vector<double>& bernoullis) {
  long double h = 0;
  for (double p : os) {
    if (p > 0) h -= static_cast<long double>(p) * std::log2(static_cast<long double>(p));
  }
  for (double p : bernoullis) {
    for (long double q : {static_cast<long double>(p), 1.0L - p}) {
      if (q > 0) h -= q * std::log2(q);
    }
  }
  return h;
}

// Hand-typed weight tables, keyed by capability letter.
inline const std::map<char, double> kBalancedByHand = {{'V', .20}, {'E', .18}, {'W', .15}, {'H', .12}, {'P', .10},
                                                       {'C', .08}, {'R', .07}, {'S', .06}, {'I', .04}};
inline const std::map<char, double> kEnterpriseByHand = {{'V', .25},       {'W', .20},       {'R', .15},
                                                         {'H', .15},       {'P', .10},       {'E', .08},
                                                         {'S', .07 / 3.0}, {'C', .07 / 3.0}, {'I', .07 / 3.0}};
inline const std::map<char, double> kRedteamByHand = {{'E', .25},       {'S', .20},       {'C', .15},
                                                      {'V', .15},       {'P', .10},       {'I', .05},
                                                      {'H', .10 / 3.0}, {'W', .10 / 3.0}, {'R', .10 / 3.0}};

// Hand-typed tool comparison rows as capability letter strings.
inline const std::map<std::string, std::string> kToolRowsByHand = {
    {"Nmap", "HR"},           {"Zenmap", "HRI"},     {"Masscan", "HR"},
    {"Shodan", "HVI"},        {"Hydra", "P"},        {"SQLMap", "WVER"},
    {"WebInspect+Safe3SI", "WVERI"}, {"SET", "S"},  {"Nessus", "HWVRI"},
    {"OpenVAS", "HWVRI"},     {"Metasploit", "HPVECRI"}, {"BeEF", "WSVECI"},
    {"Nessus & Metasploit", "HPWVEI"}, {"BeEF & Metasploit", "HPWSVECI"}};

/// Sum of the weights of the letters present, added in letter order.
inline double hand_sum(const std::string& letters, const std::map<char, double>& weights) {
  double s = 0;
  for (char c : letters) s += weights.at(c);
  return s;
}

}  // namespace ptk_test
