#include "sptoken/apow.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace sptoken::apow {

namespace {

__extension__ typedef __int128 i128;

constexpr std::int64_t kMaxMagnitude = std::int64_t{1} << 50;

std::vector<double> scaled_real(std::span<const i128> v, double denom) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<double>(v[i]) / denom;
  return out;
}

// N^2 x - S, the common-denominator form of x - mean/N.
std::vector<i128> offset_by_mean(const DataPoint& x, const ExactMean& mean, i128 factor,
                                 i128 mean_factor) {
  std::vector<i128> out(x.dim());
  for (std::size_t c = 0; c < x.dim(); ++c)
    out[c] = factor * x.values[c] - mean_factor * static_cast<i128>(mean.sum[c]);
  return out;
}

i128 abs128(i128 v) { return v < 0 ? -v : v; }

i128 exact_norm_l1(std::span<const i128> v) {
  i128 s = 0;
  for (auto c : v) s += abs128(c);
  return s;
}

i128 exact_norm_linf(std::span<const i128> v) {
  i128 m = 0;
  for (auto c : v) m = std::max(m, abs128(c));
  return m;
}

long double norm_l2(std::span<const i128> v) {
  long double s = 0;
  for (auto c : v) s += static_cast<long double>(c) * static_cast<long double>(c);
  return std::sqrt(s);
}

bool positively_collinear(const std::vector<std::vector<i128>>& vs) {
  const std::vector<i128>* ref = nullptr;
  for (const auto& v : vs)
    if (std::any_of(v.begin(), v.end(), [](i128 c) { return c != 0; })) {
      ref = &v;
      break;
    }
  if (ref == nullptr) return true;
  for (const auto& v : vs) {
    i128 dot = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      dot += v[i] * (*ref)[i];
      for (std::size_t j = i + 1; j < v.size(); ++j)
        if (v[i] * (*ref)[j] != v[j] * (*ref)[i]) return false;
    }
    if (dot < 0) return false;
  }
  return true;
}

}  // namespace

Norm parse_norm(const std::string& name) {
  if (name == "L1" || name == "l1") return Norm::kL1;
  if (name == "L2" || name == "l2") return Norm::kL2;
  if (name == "Linf" || name == "linf" || name == "LINF") return Norm::kLinf;
  throw std::invalid_argument("unknown norm '" + name + "' (expected L1, L2 or Linf)");
}

const char* to_string(Norm norm) {
  switch (norm) {
    case Norm::kL1: return "L1";
    case Norm::kL2: return "L2";
    case Norm::kLinf: return "Linf";
  }
  return "?";
}

DataPoint DataPoint::from_real(std::span<const double> real) {
  DataPoint p;
  p.values.reserve(real.size());
  for (double v : real) {
    if (!std::isfinite(v) || std::abs(v) * kScale > static_cast<double>(kMaxMagnitude))
      throw std::invalid_argument("data value out of fixed-point range");
    p.values.push_back(std::llround(v * kScale));
  }
  return p;
}

std::vector<double> DataPoint::to_real() const {
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    out[i] = static_cast<double>(values[i]) / static_cast<double>(kScale);
  return out;
}

std::vector<double> ExactMean::to_real() const {
  std::vector<double> out(sum.size());
  for (std::size_t i = 0; i < sum.size(); ++i)
    out[i] = static_cast<double>(sum[i]) / static_cast<double>(count) / static_cast<double>(kScale);
  return out;
}

ExactMean exact_mean(std::span<const DataPoint> points) {
  if (points.empty()) throw std::invalid_argument("mean of zero points");
  ExactMean m;
  m.sum.assign(points.front().dim(), 0);
  m.count = static_cast<std::int64_t>(points.size());
  for (const auto& p : points) {
    if (p.dim() != m.sum.size()) throw std::invalid_argument("dimension mismatch");
    for (std::size_t c = 0; c < p.dim(); ++c) m.sum[c] += p.values[c];
  }
  return m;
}

double norm_of(std::span<const double> v, Norm norm) {
  double acc = 0.0;
  switch (norm) {
    case Norm::kL1:
      for (double c : v) acc += std::abs(c);
      return acc;
    case Norm::kL2:
      for (double c : v) acc += c * c;
      return std::sqrt(acc);
    case Norm::kLinf:
      for (double c : v) acc = std::max(acc, std::abs(c));
      return acc;
  }
  return acc;
}

double difficulty(std::span<const double> x, std::span<const double> mean, double d0, double alpha,
                  Norm norm) {
  if (x.size() != mean.size()) throw std::invalid_argument("dimension mismatch between x and mean");
  std::vector<double> diff(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) diff[i] = x[i] - mean[i];
  return d0 + alpha * norm_of(diff, norm);
}

double difficulty(const DataPoint& x, const DataPoint& mean, double d0, double alpha, Norm norm) {
  if (x.dim() != mean.dim()) throw std::invalid_argument("dimension mismatch between x and mean");
  auto xr = x.to_real();
  auto mr = mean.to_real();
  return difficulty(xr, mr, d0, alpha, norm);
}

std::uint32_t difficulty_to_bits(double d) {
  if (!(d > 0.0)) return 1;
  if (d >= static_cast<double>(kMaxDifficultyBits)) return kMaxDifficultyBits;
  auto r = std::lround(d);
  return static_cast<std::uint32_t>(std::clamp<long>(r, 1, kMaxDifficultyBits));
}

DataPoint FragmentSet::sum() const {
  DataPoint s;
  if (fragments.empty()) return s;
  s.values.assign(fragments.front().dim(), 0);
  for (const auto& f : fragments)
    for (std::size_t c = 0; c < f.dim(); ++c) s.values[c] += f.values[c];
  return s;
}

FragmentSet fragment(const DataPoint& x, int n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("fragment count must be >= 1");
  for (auto v : x.values)
    if (v > kMaxMagnitude || v < -kMaxMagnitude) throw std::invalid_argument("data value too large");
  FragmentSet fs;
  if (n == 1) {
    fs.fragments.push_back(x);
    return fs;
  }
  while (true) {
    fs.fragments.assign(n, DataPoint{std::vector<std::int64_t>(x.dim(), 0)});
    for (std::size_t c = 0; c < x.dim(); ++c) {
      const std::int64_t bound = 2 * std::abs(x.values[c]) + (std::int64_t{1} << 20);
      std::uniform_int_distribution<std::int64_t> draw(-bound, bound);
      std::int64_t residual = x.values[c];
      for (int j = 0; j + 1 < n; ++j) {
        fs.fragments[j].values[c] = draw(rng);
        residual -= fs.fragments[j].values[c];
      }
      fs.fragments[n - 1].values[c] = residual;
    }
    const bool all_equal = std::all_of(fs.fragments.begin(), fs.fragments.end(),
                                       [&](const DataPoint& f) { return f == fs.fragments.front(); });
    if (!all_equal) return fs;
  }
}

void ApowRound::validate() const {
  if (participants.empty()) throw std::invalid_argument("round needs at least one participant");
  if (participants.size() != data.size())
    throw std::invalid_argument("participants and data sizes differ");
  if (!(d0 > 0.0)) throw std::invalid_argument("d0 must be > 0");
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be > 0");
  std::size_t dim = 0;
  for (const auto& p : participants) {
    auto it = data.find(p);
    if (it == data.end()) throw std::invalid_argument("no data for participant '" + p + "'");
    if (it->second.dim() == 0) throw std::invalid_argument("empty data point for '" + p + "'");
    if (dim == 0) dim = it->second.dim();
    if (it->second.dim() != dim) throw std::invalid_argument("inconsistent data dimensions");
  }
}

RoundResult run_round(const ApowRound& round, Rng& rng) {
  round.validate();
  const auto n = static_cast<int>(round.participants.size());
  const auto dim = round.data.begin()->second.dim();
  RoundResult result;

  // Step 1: fragment, keep x_ii, send x_ij to j.
  std::map<std::string, FragmentSet> own;
  for (const auto& id : round.participants) {
    auto fs = fragment(round.data.at(id), n, rng);
    fs.owner = id;
    for (int j = 0; j < n; ++j) {
      if (round.participants[j] == id) continue;
      result.transcript.push_back({1, id, round.participants[j], "fragment", fs.fragments[j].values, 0.0});
    }
    own.emplace(id, std::move(fs));
  }

  // Step 2: c_i = sum of the column of fragments addressed to i, then broadcast.
  std::map<std::string, std::vector<std::int64_t>> partial;
  for (int i = 0; i < n; ++i) {
    const auto& id = round.participants[i];
    std::vector<std::int64_t> c = own.at(id).fragments[i].values;
    for (const auto& m : result.transcript)
      if (m.step == 1 && m.to == id)
        for (std::size_t d = 0; d < dim; ++d) c[d] += m.values[d];
    partial.emplace(id, c);
  }
  for (const auto& id : round.participants)
    result.transcript.push_back({2, id, "*", "partial_sum", partial.at(id), 0.0});

  // Steps 3-4: every party derives the mean from what it received, then its sub-difficulties.
  const i128 big_n = n;
  for (int i = 0; i < n; ++i) {
    const auto& id = round.participants[i];
    PartyOutcome out;
    out.partial_sum = partial.at(id);
    out.mean.sum = out.partial_sum;
    out.mean.count = n;
    for (const auto& m : result.transcript)
      if (m.step == 2 && m.from != id)
        for (std::size_t d = 0; d < dim; ++d) out.mean.sum[d] += m.values[d];

    out.fragments = own.at(id);
    const double sub_d0 = round.d0 / n;
    const double denom_sub = static_cast<double>(n) * n * kScale;
    for (int k = 0; k < n; ++k) {
      auto off = offset_by_mean(out.fragments.fragments[k], out.mean, big_n * big_n, 1);
      auto real = scaled_real(off, denom_sub);
      double d = sub_d0 + round.alpha * norm_of(real, round.norm);
      out.sub_difficulties.push_back(d);
      result.attestations.push_back({round.participants[k], id, k, d, true});
    }
    auto whole = offset_by_mean(round.data.at(id), out.mean, big_n, 1);
    out.single_step_difficulty =
        round.d0 + round.alpha * norm_of(scaled_real(whole, static_cast<double>(n) * kScale), round.norm);
    result.parties.emplace(id, std::move(out));
  }
  for (const auto& a : result.attestations)
    result.transcript.push_back({4, a.certifier, a.competitor, "attestation", {a.fragment}, a.difficulty});
  return result;
}

bool split_work_dominates(const FragmentSet& fragments, const DataPoint& x, const ExactMean& mean,
                          Norm norm) {
  const i128 n = static_cast<i128>(fragments.fragments.size());
  std::vector<std::vector<i128>> terms;
  for (const auto& f : fragments.fragments) terms.push_back(offset_by_mean(f, mean, n * n, 1));
  // Sum of terms is N^2 x - N S, i.e. N^2 (x - mean) in the same units.
  auto whole = offset_by_mean(x, mean, n * n, n);
  switch (norm) {
    case Norm::kL1:
    case Norm::kLinf: {
      auto f = norm == Norm::kL1 ? exact_norm_l1 : exact_norm_linf;
      i128 lhs = 0;
      for (const auto& t : terms) lhs += f(t);
      return lhs >= f(whole);
    }
    case Norm::kL2: {
      if (positively_collinear(terms)) return true;
      long double lhs = 0;
      for (const auto& t : terms) lhs += norm_l2(t);
      return lhs >= norm_l2(whole);
    }
  }
  return false;
}

ApowRound round_from_json(const nlohmann::json& j) {
  ApowRound r;
  r.participants = j.at("participants").get<std::vector<std::string>>();
  for (const auto& [id, values] : j.at("data").items())
    r.data.emplace(id, DataPoint::from_real(values.get<std::vector<double>>()));
  r.d0 = j.value("d0", 1.0);
  r.alpha = j.value("alpha", 1.0);
  r.norm = parse_norm(j.value("norm", std::string("L2")));
  r.validate();
  return r;
}

nlohmann::json round_result_to_json(const ApowRound& round, const RoundResult& result) {
  using nlohmann::json;
  auto real = [](const std::vector<std::int64_t>& v) {
    std::vector<double> out;
    for (auto x : v) out.push_back(static_cast<double>(x) / kScale);
    return out;
  };
  json j;
  j["d0"] = round.d0;
  j["alpha"] = round.alpha;
  j["norm"] = to_string(round.norm);
  j["participants"] = json::object();
  for (const auto& id : round.participants) {
    const auto& p = result.parties.at(id);
    json pj;
    pj["fragments"] = json::array();
    for (const auto& f : p.fragments.fragments) pj["fragments"].push_back(real(f.values));
    pj["partial_sum"] = real(p.partial_sum);
    pj["mean"] = p.mean.to_real();
    pj["sub_difficulties"] = p.sub_difficulties;
    double total = 0.0;
    std::vector<std::uint32_t> bits;
    for (double d : p.sub_difficulties) {
      total += d;
      bits.push_back(difficulty_to_bits(d));
    }
    pj["sub_difficulty_bits"] = bits;
    pj["total_sub_difficulty"] = total;
    pj["single_step_difficulty"] = p.single_step_difficulty;
    j["participants"][id] = pj;
  }
  j["transcript"] = json::array();
  for (const auto& m : result.transcript) {
    json mj{{"step", m.step}, {"from", m.from}, {"to", m.to}, {"kind", m.kind}};
    if (m.kind == "attestation") {
      mj["fragment"] = m.values.at(0);
      mj["difficulty"] = m.value;
      mj["completed"] = true;
    } else {
      mj["values"] = real(m.values);
    }
    j["transcript"].push_back(mj);
  }
  return j;
}

}  // namespace sptoken::apow
