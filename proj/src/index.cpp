#include "mdqa/index.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "mdqa/error.hpp"
#include "mdqa/json_io.hpp"

namespace mdqa {

namespace {

bool is_token_byte(unsigned char c) noexcept {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
}

std::vector<std::string> unique_terms(std::span<const std::string> terms) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& t : terms) {
    if (seen.insert(t).second) out.push_back(t);
  }
  return out;
}

double term_contribution(double idf, double tf, double dl, double avgdl, const Bm25Params& p) {
  const double norm = avgdl > 0.0 ? dl / avgdl : 0.0;
  return idf * (tf * (p.k1 + 1.0)) / (tf + p.k1 * (1.0 - p.b + p.b * norm));
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(std::string_view s, std::size_t line) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw DataError("bad number '" + std::string(s) + "'", line);
  return v;
}

std::uint64_t parse_uint(std::string_view s, std::size_t line) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
    throw DataError("bad integer '" + std::string(s) + "'", line);
  }
  return v;
}

}  // namespace

void Bm25Params::validate() const {
  if (!(k1 >= 0.0) || !std::isfinite(k1)) throw ConfigError("bm25 k1 must be >= 0");
  if (!(b >= 0.0 && b <= 1.0)) throw ConfigError("bm25 b must lie in [0, 1]");
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> terms;
  std::string current;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_token_byte(c)) {
      current.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : ch);
    } else if (!current.empty()) {
      terms.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) terms.push_back(std::move(current));
  return terms;
}

Index Index::build(std::span<const Passage> passages, Bm25Params params) {
  params.validate();
  Index index;
  index.params_ = params;
  index.ids_.reserve(passages.size());
  for (const auto& p : passages) {
    const auto doc = static_cast<std::uint32_t>(index.ids_.size());
    if (!index.doc_by_id_.emplace(p.id, doc).second) throw DataError("duplicate passage id '" + p.id + "'");
    index.ids_.push_back(p.id);
    index.article_ids_.push_back(p.article_id);

    std::unordered_map<std::string, std::uint32_t> counts;
    const auto terms = tokenize(p.text);
    for (const auto& t : terms) ++counts[t];
    index.lengths_.push_back(static_cast<std::uint32_t>(terms.size()));
    for (auto& [term, tf] : counts) index.postings_[term].push_back(Posting{doc, tf});
  }
  index.finalize();
  return index;
}

void Index::finalize() {
  double total = 0.0;
  for (auto len : lengths_) total += len;
  avgdl_ = ids_.empty() ? 0.0 : total / static_cast<double>(ids_.size());
  for (auto& [term, list] : postings_) {
    std::sort(list.begin(), list.end(), [](const Posting& a, const Posting& b) { return a.doc < b.doc; });
  }
}

void Index::set_params(Bm25Params params) {
  params.validate();
  params_ = params;
}

const std::vector<Posting>* Index::postings(std::string_view term) const {
  auto it = postings_.find(std::string(term));
  return it == postings_.end() ? nullptr : &it->second;
}

std::size_t Index::doc_frequency(std::string_view term) const {
  const auto* list = postings(term);
  return list ? list->size() : 0;
}

double Index::idf(std::string_view term) const {
  const double n = static_cast<double>(size());
  const double df = static_cast<double>(doc_frequency(term));
  return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

std::int64_t Index::doc_of(std::string_view passage_id) const {
  auto it = doc_by_id_.find(std::string(passage_id));
  return it == doc_by_id_.end() ? -1 : static_cast<std::int64_t>(it->second);
}

std::uint32_t Index::term_frequency(std::string_view term, std::uint32_t doc) const {
  const auto* list = postings(term);
  if (!list) return 0;
  auto it = std::lower_bound(list->begin(), list->end(), doc,
                             [](const Posting& p, std::uint32_t d) { return p.doc < d; });
  return (it != list->end() && it->doc == doc) ? it->tf : 0;
}

double bm25_score(const Index& index, std::span<const std::string> query_terms, std::string_view passage_id) {
  const auto doc = index.doc_of(passage_id);
  if (doc < 0) throw Error("unknown passage id '" + std::string(passage_id) + "'");
  const auto d = static_cast<std::uint32_t>(doc);
  double score = 0.0;
  for (const auto& term : unique_terms(query_terms)) {
    const auto tf = index.term_frequency(term, d);
    if (tf == 0) continue;
    score += term_contribution(index.idf(term), tf, index.doc_length(d), index.avgdl(), index.params());
  }
  return score;
}

std::vector<SearchHit> search(const Index& index, std::string_view query, std::size_t k,
                              const std::unordered_set<std::string>* allowed_articles) {
  if (k == 0) throw Error("search depth k must be at least 1");
  std::vector<SearchHit> hits;
  if (index.size() == 0) return hits;

  std::vector<double> accum(index.size(), 0.0);
  std::vector<std::uint32_t> touched;
  std::vector<char> seen(index.size(), 0);
  const auto terms = tokenize(query);
  for (const auto& term : unique_terms(terms)) {
    const auto* list = index.postings(term);
    if (!list) continue;
    const double idf = index.idf(term);
    for (const auto& posting : *list) {
      if (allowed_articles && !allowed_articles->contains(index.article_id(posting.doc))) continue;
      accum[posting.doc] +=
          term_contribution(idf, posting.tf, index.doc_length(posting.doc), index.avgdl(), index.params());
      if (!seen[posting.doc]) {
        seen[posting.doc] = 1;
        touched.push_back(posting.doc);
      }
    }
  }

  auto better = [&](std::uint32_t a, std::uint32_t b) {
    if (accum[a] != accum[b]) return accum[a] > accum[b];
    return index.passage_id(a) < index.passage_id(b);
  };
  const std::size_t take = std::min(k, touched.size());
  std::partial_sort(touched.begin(), touched.begin() + static_cast<std::ptrdiff_t>(take), touched.end(), better);
  hits.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    hits.push_back(SearchHit{index.passage_id(touched[i]), accum[touched[i]], i + 1});
  }
  return hits;
}

// ---------------------------------------------------------------------------
// Snapshot
//
//   MDQA-BM25-INDEX 1
//   params <k1> <b>
//   docs <N>
//   {"id":..,"article_id":..,"length":..[,"passage":{...}]}     x N
//   terms <V>
//   <term>\t<doc>:<tf> <doc>:<tf> ...                            x V
//   end

void Index::save(std::ostream& out, std::span<const Passage> passages) const {
  if (!passages.empty() && passages.size() != ids_.size()) {
    throw Error("snapshot passages must match the indexed documents");
  }
  out << kIndexMagic << ' ' << kIndexVersion << '\n';
  out << "params " << format_double(params_.k1) << ' ' << format_double(params_.b) << '\n';
  out << "docs " << ids_.size() << '\n';
  for (std::size_t d = 0; d < ids_.size(); ++d) {
    Json rec{{"id", ids_[d]}, {"article_id", article_ids_[d]}, {"length", lengths_[d]}};
    if (!passages.empty()) {
      if (passages[d].id != ids_[d]) throw Error("snapshot passages are not in index order");
      rec["passage"] = to_json(passages[d]);
    }
    out << dump_line(rec) << '\n';
  }
  std::vector<const std::string*> terms;
  terms.reserve(postings_.size());
  for (const auto& [term, list] : postings_) terms.push_back(&term);
  std::sort(terms.begin(), terms.end(), [](const auto* a, const auto* b) { return *a < *b; });
  out << "terms " << terms.size() << '\n';
  for (const auto* term : terms) {
    out << *term << '\t';
    const auto& list = postings_.at(*term);
    for (std::size_t i = 0; i < list.size(); ++i) {
      if (i) out << ' ';
      out << list[i].doc << ':' << list[i].tf;
    }
    out << '\n';
  }
  out << "end\n";
}

IndexSnapshot IndexSnapshot::load(std::istream& in) {
  IndexSnapshot snap;
  Index& index = snap.index;
  std::string line;
  std::size_t line_no = 0;
  auto next = [&]() -> std::string& {
    if (!std::getline(in, line)) throw DataError("truncated index snapshot", line_no + 1);
    ++line_no;
    return line;
  };
  auto expect_prefix = [&](std::string_view prefix) {
    const std::string& l = next();
    if (l.rfind(prefix, 0) != 0) throw DataError("expected '" + std::string(prefix) + "'", line_no);
    return std::string_view(l).substr(prefix.size());
  };

  {
    std::istringstream header(next());
    std::string magic;
    int version = 0;
    header >> magic >> version;
    if (magic != kIndexMagic) throw DataError("not an index snapshot (bad magic)", line_no);
    if (version != kIndexVersion) {
      throw DataError("unsupported index snapshot version " + std::to_string(version), line_no);
    }
  }
  {
    const auto rest = std::string(expect_prefix("params "));
    const auto space = rest.find(' ');
    if (space == std::string::npos) throw DataError("bad params line", line_no);
    Bm25Params params{parse_double(std::string_view(rest).substr(0, space), line_no),
                      parse_double(std::string_view(rest).substr(space + 1), line_no)};
    try {
      params.validate();
    } catch (const ConfigError& e) {
      throw DataError(e.what(), line_no);
    }
    index.params_ = params;
  }

  const auto n_docs = parse_uint(expect_prefix("docs "), line_no);
  bool with_passages = false;
  for (std::uint64_t d = 0; d < n_docs; ++d) {
    Json rec;
    try {
      rec = Json::parse(next());
    } catch (const Json::parse_error& e) {
      throw DataError(std::string("malformed document record: ") + e.what(), line_no);
    }
    try {
      const std::string id = require_string(rec, "id");
      if (!index.doc_by_id_.emplace(id, static_cast<std::uint32_t>(d)).second) {
        throw DataError("duplicate passage id '" + id + "'");
      }
      index.ids_.push_back(id);
      index.article_ids_.push_back(require_string(rec, "article_id"));
      index.lengths_.push_back(rec.at("length").get<std::uint32_t>());
      if (auto it = rec.find("passage"); it != rec.end()) {
        if (d > 0 && !with_passages) throw DataError("passage records must be present for all documents");
        with_passages = true;
        snap.passages.push_back(passage_from_json(*it));
        if (snap.passages.back().id != id) throw DataError("passage record id mismatch");
      } else if (with_passages) {
        throw DataError("passage records must be present for all documents");
      }
    } catch (const DataError& e) {
      throw DataError(e.what(), line_no);
    } catch (const Json::exception& e) {
      throw DataError(e.what(), line_no);
    }
  }

  const auto n_terms = parse_uint(expect_prefix("terms "), line_no);
  std::vector<std::uint64_t> tf_sums(index.ids_.size(), 0);
  for (std::uint64_t t = 0; t < n_terms; ++t) {
    const std::string& l = next();
    const auto tab = l.find('\t');
    if (tab == std::string::npos || tab == 0) throw DataError("bad postings line", line_no);
    std::string term = l.substr(0, tab);
    std::vector<Posting> list;
    std::string_view rest = std::string_view(l).substr(tab + 1);
    while (!rest.empty()) {
      const auto space = rest.find(' ');
      const auto item = rest.substr(0, space);
      const auto colon = item.find(':');
      if (colon == std::string_view::npos) throw DataError("bad posting '" + std::string(item) + "'", line_no);
      const auto doc = parse_uint(item.substr(0, colon), line_no);
      const auto tf = parse_uint(item.substr(colon + 1), line_no);
      if (doc >= index.ids_.size()) throw DataError("posting refers to unknown document", line_no);
      if (tf == 0) throw DataError("term frequency must be >= 1", line_no);
      if (!list.empty() && list.back().doc >= doc) throw DataError("postings must be strictly increasing", line_no);
      list.push_back(Posting{static_cast<std::uint32_t>(doc), static_cast<std::uint32_t>(tf)});
      tf_sums[doc] += tf;
      rest = space == std::string_view::npos ? std::string_view{} : rest.substr(space + 1);
    }
    if (list.empty()) throw DataError("term without postings", line_no);
    if (!index.postings_.emplace(std::move(term), std::move(list)).second) {
      throw DataError("duplicate term", line_no);
    }
  }
  if (next() != "end") throw DataError("expected 'end'", line_no);
  for (std::size_t d = 0; d < tf_sums.size(); ++d) {
    if (tf_sums[d] != index.lengths_[d]) {
      throw DataError("document length of '" + index.ids_[d] + "' disagrees with its postings");
    }
  }
  index.finalize();
  return snap;
}

}  // namespace mdqa
