#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <set>

namespace oracle {

std::vector<std::string> tokens(const std::string& text) {
  static const std::regex word("[A-Za-z0-9]+");
  std::vector<std::string> out;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), word); it != std::sregex_iterator(); ++it) {
    std::string t = it->str();
    for (auto& c : t) {
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    out.push_back(t);
  }
  return out;
}

double bm25(const std::vector<RawDoc>& docs, const std::string& query, const std::string& doc_id, double k1,
            double b) {
  const double n = static_cast<double>(docs.size());
  double total_len = 0;
  std::vector<std::vector<std::string>> toks;
  for (const auto& d : docs) {
    toks.push_back(tokens(d.text));
    total_len += static_cast<double>(toks.back().size());
  }
  const double avgdl = total_len / n;
  std::size_t target = docs.size();
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (docs[i].id == doc_id) target = i;
  }
  const auto q = tokens(query);
  const std::set<std::string> terms(q.begin(), q.end());
  double score = 0;
  for (const auto& t : terms) {
    double df = 0;
    for (const auto& dt : toks) {
      if (std::find(dt.begin(), dt.end(), t) != dt.end()) df += 1;
    }
    const double tf = static_cast<double>(std::count(toks[target].begin(), toks[target].end(), t));
    if (tf == 0) continue;
    const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
    const double dl = static_cast<double>(toks[target].size());
    score += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl));
  }
  return score;
}

std::vector<std::pair<std::string, double>> bm25_rank(const std::vector<RawDoc>& docs, const std::string& query,
                                                      double k1, double b) {
  const auto q = tokens(query);
  std::vector<std::pair<std::string, double>> out;
  for (const auto& d : docs) {
    const auto dt = tokens(d.text);
    bool shares = false;
    for (const auto& t : q) shares = shares || std::find(dt.begin(), dt.end(), t) != dt.end();
    if (shares) out.emplace_back(d.id, bm25(docs, query, d.id, k1, b));
  }
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) {
    if (x.second != y.second) return x.second > y.second;
    return x.first < y.first;
  });
  return out;
}

namespace {

using Gram = std::vector<std::string>;

std::vector<Gram> grams_of(const std::string& s, std::size_t n) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : s) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      if (!cur.empty()) words.push_back(cur);
      cur.clear();
    } else {
      cur += (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
    }
  }
  if (!cur.empty()) words.push_back(cur);
  std::vector<Gram> out;
  for (std::size_t i = 0; i + n <= words.size(); ++i) out.emplace_back(words.begin() + i, words.begin() + i + n);
  return out;
}

bool has(const std::vector<Gram>& v, const Gram& g) { return std::find(v.begin(), v.end(), g) != v.end(); }

double safe_div(double a, double b) { return b == 0 ? 1.0 : a / b; }

}  // namespace

double sari(const std::string& source, const std::string& prediction, const std::vector<std::string>& references) {
  double sum = 0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const auto s = grams_of(source, n);
    const auto o = grams_of(prediction, n);
    std::vector<std::vector<Gram>> r;
    for (const auto& ref : references) r.push_back(grams_of(ref, n));
    std::vector<Gram> universe;
    auto add_all = [&](const std::vector<Gram>& v) {
      for (const auto& g : v) {
        if (!has(universe, g)) universe.push_back(g);
      }
    };
    add_all(s);
    add_all(o);
    for (const auto& x : r) add_all(x);

    // Per-gram indicator table.
    double keep_hit = 0, keep_sys = 0, keep_ref = 0;
    double del_hit = 0, del_sys = 0;
    double add_hit = 0, add_sys = 0, add_ref = 0;
    for (const auto& g : universe) {
      const double in_s = has(s, g) ? 1 : 0;
      const double in_o = has(o, g) ? 1 : 0;
      double frac = 0;
      bool any = false;
      for (const auto& x : r) {
        if (has(x, g)) {
          frac += 1.0 / static_cast<double>(r.size());
          any = true;
        }
      }
      const double in_r = any ? 1 : 0;
      keep_hit += in_s * in_o * frac;
      keep_sys += in_s * in_o;
      keep_ref += in_s * frac;
      del_hit += in_s * (1 - in_o) * (1 - frac);
      del_sys += in_s * (1 - in_o);
      add_hit += (1 - in_s) * in_o * in_r;
      add_sys += (1 - in_s) * in_o;
      add_ref += (1 - in_s) * in_r;
    }
    auto f1 = [](double p, double rr) { return p + rr > 0 ? 2 * p * rr / (p + rr) : 0.0; };
    const double keep = f1(safe_div(keep_hit, keep_sys), safe_div(keep_hit, keep_ref));
    const double add = f1(safe_div(add_hit, add_sys), safe_div(add_hit, add_ref));
    const double del = safe_div(del_hit, del_sys);
    sum += (keep + add + del) / 3;
  }
  return sum / 4;
}

std::vector<std::size_t> knn(const std::vector<double>& query, const std::vector<std::vector<double>>& pool,
                             std::size_t k) {
  std::vector<std::pair<long double, std::size_t>> scored;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    long double dot = 0, nq = 0, np = 0;
    for (std::size_t d = 0; d < query.size(); ++d) {
      dot += static_cast<long double>(query[d]) * pool[i][d];
      nq += static_cast<long double>(query[d]) * query[d];
      np += static_cast<long double>(pool[i][d]) * pool[i][d];
    }
    const long double cos = (nq == 0 || np == 0) ? 0 : dot / (std::sqrt(nq) * std::sqrt(np));
    scored.emplace_back(-cos, i);
  }
  std::sort(scored.begin(), scored.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < std::min(k, scored.size()); ++i) out.push_back(scored[i].second);
  return out;
}

}  // namespace oracle
