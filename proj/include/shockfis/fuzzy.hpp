#pragma once

// Mamdani fuzzy inference over the (pixel error, neighborhood error) pair.
//
// Pipeline per input pair:
//   1. fuzzify both inputs against every triangular term;
//   2. each rule fires at min(antecedent degrees);
//   3. each fired rule clips its consequent term at the firing strength;
//   4. clipped sets are aggregated by pointwise max on a uniform grid;
//   5. the crisp output is the discrete centroid sum(x*mu) / sum(mu).
// If nothing fires the result is spec.fallback_output with a flag raised.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "shockfis/error.hpp"
#include "shockfis/error_maps.hpp"
#include "shockfis/image_grid.hpp"
#include "shockfis/text_io.hpp"

namespace shockfis {

/// Triangle with feet a, c and peak b. Shoulders (a == b or b == c) are
/// one-sided ramps; the peak always evaluates to exactly 1.
struct TriangularMF {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;

  friend bool operator==(const TriangularMF&, const TriangularMF&) = default;
};

inline double trimf_eval(const TriangularMF& mf, double x) noexcept {
  if (!(x >= mf.a && x <= mf.c)) return 0.0;
  if (x == mf.b) return 1.0;
  if (x < mf.b) return (x - mf.a) / (mf.b - mf.a);
  return (mf.c - x) / (mf.c - mf.b);
}

struct FuzzyTerm {
  std::string label;
  TriangularMF mf;

  friend bool operator==(const FuzzyTerm&, const FuzzyTerm&) = default;
};

struct FuzzyVariable {
  std::string name;
  double lo = 0.0;
  double hi = 1.0;
  std::vector<FuzzyTerm> terms;

  std::optional<std::size_t> index_of(const std::string& label) const {
    for (std::size_t i = 0; i < terms.size(); ++i) {
      if (terms[i].label == label) return i;
    }
    return std::nullopt;
  }

  const FuzzyTerm& term(const std::string& label) const {
    const auto i = index_of(label);
    if (!i) throw UsageError("fuzzy variable '" + name + "' has no term '" + label + "'");
    return terms[*i];
  }

  friend bool operator==(const FuzzyVariable&, const FuzzyVariable&) = default;
};

struct FuzzyRule {
  std::string pixel_term;
  std::string neigh_term;
  std::string output_term;

  friend bool operator==(const FuzzyRule&, const FuzzyRule&) = default;
};

struct FisSpec {
  FuzzyVariable pixel_err;
  FuzzyVariable neigh_err;
  FuzzyVariable anomaly;
  std::vector<FuzzyRule> rules;  // AND = min
  std::size_t defuzz_resolution = 1001;
  double fallback_output = 0.0;

  friend bool operator==(const FisSpec&, const FisSpec&) = default;
};

inline void validate(const FuzzyVariable& var) {
  if (var.name.empty()) throw UsageError("fuzzy variable without a name");
  if (!(var.lo < var.hi)) throw UsageError("fuzzy variable '" + var.name + "': empty universe");
  if (var.terms.empty()) throw UsageError("fuzzy variable '" + var.name + "' has no terms");
  std::set<std::string> seen;
  for (const auto& t : var.terms) {
    if (!seen.insert(t.label).second) {
      throw UsageError("fuzzy variable '" + var.name + "': duplicate term '" + t.label + "'");
    }
    const auto& mf = t.mf;
    if (!(mf.a <= mf.b && mf.b <= mf.c)) {
      throw UsageError("term '" + t.label + "': trimf requires a <= b <= c");
    }
    if (mf.a < var.lo || mf.c > var.hi) {
      throw UsageError("term '" + t.label + "': support leaves the universe of '" + var.name + "'");
    }
  }
}

inline void validate(const FisSpec& spec) {
  validate(spec.pixel_err);
  validate(spec.neigh_err);
  validate(spec.anomaly);
  if (spec.defuzz_resolution < 101) throw UsageError("fuzzy spec: defuzz_resolution must be >= 101");
  if (!std::isfinite(spec.fallback_output)) throw UsageError("fuzzy spec: fallback must be finite");
  std::set<std::pair<std::string, std::string>> antecedents;
  for (const auto& r : spec.rules) {
    spec.pixel_err.term(r.pixel_term);
    spec.neigh_err.term(r.neigh_term);
    spec.anomaly.term(r.output_term);
    if (!antecedents.emplace(r.pixel_term, r.neigh_term).second) {
      throw UsageError("fuzzy spec: duplicate antecedent (" + r.pixel_term + ", " + r.neigh_term + ")");
    }
  }
}

/// The rule base of the reference classifier, term for term.
inline FisSpec default_spec() {
  const auto input = [](std::string name) {
    return FuzzyVariable{std::move(name), 0.0, 1.0,
                         {{"low", {0.0, 0.0, 0.3}},
                          {"medium", {0.2, 0.5, 0.8}},
                          {"high", {0.7, 1.0, 1.0}}}};
  };
  FisSpec spec;
  spec.pixel_err = input("pixel_err");
  spec.neigh_err = input("neigh_err");
  spec.anomaly = FuzzyVariable{"anomaly", 0.0, 1.0,
                               {{"none", {0.0, 0.0, 0.3}},
                                {"strong", {0.2, 0.5, 0.8}},
                                {"possible", {0.7, 1.0, 1.0}}}};
  spec.rules = {
      {"high", "high", "strong"},
      {"medium", "medium", "possible"},
      {"high", "low", "possible"},
      {"low", "high", "possible"},
      {"low", "low", "none"},
  };
  return spec;
}

/// Exchanges two consequent labels throughout the rule base.
inline FisSpec swap_consequents(FisSpec spec, const std::string& first = "strong",
                                const std::string& second = "possible") {
  spec.anomaly.term(first);
  spec.anomaly.term(second);
  for (auto& r : spec.rules) {
    if (r.output_term == first) {
      r.output_term = second;
    } else if (r.output_term == second) {
      r.output_term = first;
    }
  }
  return spec;
}

struct InferResult {
  double value = 0.0;
  bool no_rule_fired = false;
};

/// Compiled form of a FisSpec: term indices resolved and every output term
/// sampled once on the defuzzification grid.
class FuzzyEngine {
 public:
  struct Firing {
    std::size_t output_term;
    double strength;
  };

  explicit FuzzyEngine(FisSpec spec) : spec_(std::move(spec)) {
    validate(spec_);
    const std::size_t n = spec_.defuzz_resolution;
    grid_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      grid_[i] = spec_.anomaly.lo +
                 (spec_.anomaly.hi - spec_.anomaly.lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    }
    const std::size_t terms = spec_.anomaly.terms.size();
    samples_.assign(terms * n, 0.0);
    support_.assign(terms, {n, 0});
    for (std::size_t t = 0; t < terms; ++t) {
      for (std::size_t i = 0; i < n; ++i) {
        const double mu = trimf_eval(spec_.anomaly.terms[t].mf, grid_[i]);
        samples_[t * n + i] = mu;
        if (mu > 0.0) {
          support_[t].first = std::min(support_[t].first, i);
          support_[t].second = i + 1;
        }
      }
    }
    for (const auto& r : spec_.rules) {
      rules_.push_back({*spec_.pixel_err.index_of(r.pixel_term), *spec_.neigh_err.index_of(r.neigh_term),
                        *spec_.anomaly.index_of(r.output_term)});
    }
  }

  const FisSpec& spec() const noexcept { return spec_; }
  std::span<const double> grid() const noexcept { return grid_; }

  /// Firing strength of every rule, in rule order.
  std::vector<double> rule_strengths(double pixel_err, double neigh_err) const {
    check_input(pixel_err, spec_.pixel_err);
    check_input(neigh_err, spec_.neigh_err);
    std::vector<double> out;
    out.reserve(rules_.size());
    for (const auto& r : rules_) {
      out.push_back(std::min(trimf_eval(spec_.pixel_err.terms[r.pixel].mf, pixel_err),
                             trimf_eval(spec_.neigh_err.terms[r.neigh].mf, neigh_err)));
    }
    return out;
  }

  /// Clip, max-aggregate and defuzzify an arbitrary list of rule firings.
  /// Listing the same firing twice leaves the result unchanged.
  InferResult aggregate(std::span<const Firing> firings) const {
    // max over rules of min(s, mu) == max over terms of min(max s, mu), exactly.
    const std::size_t terms = spec_.anomaly.terms.size();
    std::vector<double> level(terms, 0.0);
    bool any = false;
    for (const auto& f : firings) {
      if (f.strength > 0.0) {
        level[f.output_term] = std::max(level[f.output_term], f.strength);
        any = true;
      }
    }
    if (!any) return {spec_.fallback_output, true};
    const std::size_t n = grid_.size();
    // Grid points outside every active term's support contribute nothing.
    std::size_t begin = n, end = 0;
    for (std::size_t t = 0; t < terms; ++t) {
      if (level[t] > 0.0) {
        begin = std::min(begin, support_[t].first);
        end = std::max(end, support_[t].second);
      }
    }
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      double mu = 0.0;
      for (std::size_t t = 0; t < terms; ++t) {
        if (level[t] > 0.0) mu = std::max(mu, std::min(level[t], samples_[t * n + i]));
      }
      num += grid_[i] * mu;
      den += mu;
    }
    if (!(den > 0.0)) return {spec_.fallback_output, true};
    return {std::clamp(num / den, spec_.anomaly.lo, spec_.anomaly.hi), false};
  }

  InferResult infer(double pixel_err, double neigh_err) const {
    const auto strengths = rule_strengths(pixel_err, neigh_err);
    std::vector<Firing> firings;
    firings.reserve(rules_.size());
    for (std::size_t r = 0; r < rules_.size(); ++r) firings.push_back({rules_[r].output, strengths[r]});
    return aggregate(firings);
  }

 private:
  struct CompiledRule {
    std::size_t pixel, neigh, output;
  };

  static void check_input(double x, const FuzzyVariable& var) {
    if (!(x >= var.lo && x <= var.hi)) {
      throw DataError("fuzzy input '" + var.name + "' = " + std::to_string(x) + " outside its universe");
    }
  }

  FisSpec spec_;
  std::vector<double> grid_;
  std::vector<double> samples_;  // [term][grid point]
  std::vector<std::pair<std::size_t, std::size_t>> support_;  // nonzero sample range per term
  std::vector<CompiledRule> rules_;
};

inline InferResult infer(const FisSpec& spec, double pixel_err, double neigh_err) {
  return FuzzyEngine(spec).infer(pixel_err, neigh_err);
}

// ---------------------------------------------------------------------------
// Lookup table

/// Precomputed inference on a (2^bits) x (2^bits) input grid. Row index is
/// the pixel error, column index the neighborhood error.
class FuzzyLut {
 public:
  FuzzyLut(const FuzzyEngine& engine, unsigned bits) : bits_(bits) {
    if (bits < 4 || bits > 12) throw UsageError("compile_lut: bits must lie in [4, 12]");
    n_ = std::size_t{1} << bits;
    values_.resize(n_ * n_);
    no_fire_.resize(n_ * n_);
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = 0; j < n_; ++j) {
        const auto r = engine.infer(grid_point(i), grid_point(j));
        values_[i * n_ + j] = r.value;
        no_fire_[i * n_ + j] = r.no_rule_fired ? 1 : 0;
      }
    }
  }

  unsigned bits() const noexcept { return bits_; }
  std::size_t side() const noexcept { return n_; }
  std::size_t size() const noexcept { return values_.size(); }

  double at(std::size_t i, std::size_t j) const noexcept { return values_[i * n_ + j]; }

  /// Nearest grid point lookup.
  InferResult lookup(double pixel_err, double neigh_err) const noexcept {
    const std::size_t k = quantize(pixel_err) * n_ + quantize(neigh_err);
    return {values_[k], no_fire_[k] != 0};
  }

 private:
  double grid_point(std::size_t i) const noexcept {
    return static_cast<double>(i) / static_cast<double>(n_ - 1);
  }

  std::size_t quantize(double x) const noexcept {
    const double scaled = std::clamp(x, 0.0, 1.0) * static_cast<double>(n_ - 1);
    return static_cast<std::size_t>(scaled + 0.5);
  }

  unsigned bits_;
  std::size_t n_ = 0;
  std::vector<double> values_;
  std::vector<std::uint8_t> no_fire_;
};

inline FuzzyLut compile_lut(const FisSpec& spec, unsigned bits = 8) {
  return FuzzyLut(FuzzyEngine(spec), bits);
}

// ---------------------------------------------------------------------------
// Per-pixel classification

struct AnomalyMap {
  ImageGrid anomaly;
  std::size_t no_rule_fired = 0;  // pixels that fell back
};

namespace detail {

template <typename Classifier>
AnomalyMap classify_pixels(const ErrorMaps& maps, Classifier&& classify) {
  require_same_shape(maps.pixel_err, maps.neigh_err, "classify_map");
  std::vector<double> out(maps.pixel_err.size());
  std::size_t fallbacks = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const InferResult r = classify(maps.pixel_err[i], maps.neigh_err[i]);
    out[i] = r.value;
    fallbacks += r.no_rule_fired ? 1 : 0;
  }
  return {ImageGrid(maps.pixel_err.width(), maps.pixel_err.height(), std::move(out)), fallbacks};
}

}  // namespace detail

inline AnomalyMap classify_map(const FuzzyEngine& engine, const ErrorMaps& maps) {
  return detail::classify_pixels(maps, [&](double p, double n) { return engine.infer(p, n); });
}

inline AnomalyMap classify_map(const FuzzyLut& lut, const ErrorMaps& maps) {
  return detail::classify_pixels(maps, [&](double p, double n) { return lut.lookup(p, n); });
}

// ---------------------------------------------------------------------------
// Spec file format
//
//   FIS v1
//   resolution 1001
//   fallback 0
//   input pixel_err 0 1
//   term low 0 0 0.3
//   ...
//   input neigh_err 0 1
//   ...
//   output anomaly 0 1
//   term none 0 0 0.3
//   ...
//   rule high high strong          # pixel term, neigh term, output term
//
// `term` lines attach to the most recent input/output line. '#' starts a comment.

inline std::string encode_fis_spec(const FisSpec& spec) {
  std::ostringstream out;
  out << "FIS v1\n";
  out << "resolution " << spec.defuzz_resolution << "\n";
  out << "fallback " << format_exact(spec.fallback_output) << "\n";
  const auto variable = [&](const char* kind, const FuzzyVariable& v) {
    out << kind << ' ' << v.name << ' ' << format_exact(v.lo) << ' ' << format_exact(v.hi) << "\n";
    for (const auto& t : v.terms) {
      out << "term " << t.label << ' ' << format_exact(t.mf.a) << ' ' << format_exact(t.mf.b) << ' '
          << format_exact(t.mf.c) << "\n";
    }
  };
  variable("input", spec.pixel_err);
  variable("input", spec.neigh_err);
  variable("output", spec.anomaly);
  for (const auto& r : spec.rules) {
    out << "rule " << r.pixel_term << ' ' << r.neigh_term << ' ' << r.output_term << "\n";
  }
  return out.str();
}

inline FisSpec decode_fis_spec(const std::string& text) {
  FisSpec spec;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  std::size_t inputs = 0;
  bool have_output = false;
  bool header = false;
  FuzzyVariable* current = nullptr;
  const auto fail = [&](const std::string& why) -> DataError {
    return DataError("fuzzy spec line " + std::to_string(lineno) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (!header) {
      if (tok.size() != 2 || tok[0] != "FIS" || tok[1] != "v1") throw fail("expected header 'FIS v1'");
      header = true;
      continue;
    }
    const std::string& key = tok[0];
    if (key == "resolution" && tok.size() == 2) {
      spec.defuzz_resolution = parse_int<std::size_t>(tok[1], "resolution");
    } else if (key == "fallback" && tok.size() == 2) {
      spec.fallback_output = parse_double(tok[1], "fallback");
    } else if ((key == "input" || key == "output") && tok.size() == 4) {
      FuzzyVariable* target = nullptr;
      if (key == "input") {
        if (inputs == 2) throw fail("more than two input variables");
        target = inputs++ == 0 ? &spec.pixel_err : &spec.neigh_err;
      } else {
        if (have_output) throw fail("more than one output variable");
        have_output = true;
        target = &spec.anomaly;
      }
      *target = FuzzyVariable{tok[1], parse_double(tok[2], "universe"), parse_double(tok[3], "universe"), {}};
      current = target;
    } else if (key == "term" && tok.size() == 5) {
      if (!current) throw fail("term before any variable");
      current->terms.push_back({tok[1], {parse_double(tok[2], "trimf a"), parse_double(tok[3], "trimf b"),
                                         parse_double(tok[4], "trimf c")}});
    } else if (key == "rule" && tok.size() == 4) {
      spec.rules.push_back({tok[1], tok[2], tok[3]});
    } else {
      throw fail("unrecognized line '" + line + "'");
    }
  }
  if (!header) throw DataError("fuzzy spec: empty file");
  if (inputs != 2 || !have_output) throw DataError("fuzzy spec: need two inputs and one output");
  try {
    validate(spec);
  } catch (const UsageError& e) {
    throw DataError(e.what());
  }
  return spec;
}

inline FisSpec load_fis_spec(const std::string& path) { return decode_fis_spec(read_text_file(path)); }

inline void save_fis_spec(const FisSpec& spec, const std::string& path) {
  write_text_file(path, encode_fis_spec(spec));
}

}  // namespace shockfis
