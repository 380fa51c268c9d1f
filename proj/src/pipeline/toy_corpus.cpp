#include <array>
#include <functional>

#include "perfalign/error.hpp"
#include "perfalign/pipeline.hpp"
#include "perfalign/rng.hpp"

namespace perfalign {

namespace {

struct Variant {
  const char* tag;
  const char* code;  // {K} and {M} are substituted
};

struct Family {
  const char* name;
  const char* statement;
  std::function<long long(long long n, long long k, long long m)> value;
  std::vector<Variant> variants;
};

const std::vector<Family>& families() {
  static const std::vector<Family> all{
      {"sum",
       "Print {K}*(1+2+...+in0)+{M}.",
       [](long long n, long long k, long long m) { return k * n * (n + 1) / 2 + m; },
       {{"f1", "x=in0;print({K}*x*(x+1)/2+{M});"},
        {"f2", "print({K}*(in0*(in0+1)/2)+{M});"},
        {"m1", "s=0;i=1;while(i<=in0){s=s+i;i=i+1;}print({K}*s+{M});"},
        {"m2", "s=0;i=in0;while(i>0){s=s+i;i=i-1;}print({K}*s+{M});"},
        {"s1", "s={M};i=1;while(i<=in0){s=s+{K}*i;i=i+1;}print(s);"},
        {"s2", "s=0;i=0;while(i<in0){i=i+1;s=s+{K}*i;}print(s+{M});"},
        {"s3", "s={M};i=1;while(i<=in0){j=0;while(j<{K}){s=s+i;j=j+1;}i=i+1;}print(s);"},
        {"e1", "x=in0;print({K}*x*(x-1)/2+{M});"},
        {"e2", "s={M};i=1;while(i<in0){s=s+{K}*i;i=i+1;}print(s);"}}},
      {"lin",
       "Print {K}*in0+{M}.",
       [](long long n, long long k, long long m) { return k * n + m; },
       {{"f1", "print({K}*in0+{M});"},
        {"f2", "x=in0;print(x*{K}+{M});"},
        {"m1", "s={M};i=0;while(i<in0){s=s+{K};i=i+1;}print(s);"},
        {"m2", "s=0;i=in0;while(i>0){s=s+{K};i=i-1;}print(s+{M});"},
        {"s1", "s=0;i=0;while(i<{K}*in0){s=s+1;i=i+1;}print(s+{M});"},
        {"s2", "s={M};i=0;while(i<in0){j=0;while(j<{K}){s=s+1;j=j+1;}i=i+1;}print(s);"},
        {"s3", "s={M};i=0;while(i<in0){s=s+{K};i=i+1;}x=0;while(x<in0){x=x+1;}print(s);"},
        {"e1", "print({K}*in0-{M});"},
        {"e2", "print({K}+in0+{M});"}}},
      {"sq",
       "Print {K}*in0*in0+{M}.",
       [](long long n, long long k, long long m) { return k * n * n + m; },
       {{"f1", "print({K}*in0*in0+{M});"},
        {"f2", "x=in0*in0;print({K}*x+{M});"},
        {"m1", "s=0;i=0;while(i<in0){s=s+in0;i=i+1;}print({K}*s+{M});"},
        {"m2", "s={M};i=0;while(i<in0){s=s+{K}*in0;i=i+1;}print(s);"},
        {"s1", "s=0;i=0;while(i<in0){j=0;while(j<in0){s=s+1;j=j+1;}i=i+1;}print({K}*s+{M});"},
        {"s2", "s=0;i=0;while(i<in0*in0){s=s+{K};i=i+1;}print(s+{M});"},
        {"s3", "s={M};i=0;while(i<in0){j=0;while(j<in0){s=s+{K};j=j+1;}i=i+1;}print(s);"},
        {"e1", "print({K}*in0+{M});"},
        {"e2", "print({K}*in0*in0-{M});"}}},
  };
  return all;
}

std::string fill(std::string text, int k, int m) {
  for (auto [key, value] : {std::pair{"{K}", k}, std::pair{"{M}", m}}) {
    const std::string v = std::to_string(value);
    for (std::size_t pos = text.find(key); pos != std::string::npos; pos = text.find(key, pos + v.size())) {
      text.replace(pos, 3, v);
    }
  }
  return text;
}

constexpr int kLow = 2;
constexpr int kHigh = 9;

}  // namespace

Corpus make_toy_corpus(const ToyCorpusOptions& options) {
  struct Combo {
    std::size_t family;
    int k, m;
  };
  std::vector<Combo> combos;
  for (std::size_t f = 0; f < families().size(); ++f) {
    for (int k = kLow; k <= kHigh; ++k) {
      for (int m = kLow; m <= kHigh; ++m) combos.push_back({f, k, m});
    }
  }
  if (options.contest_problems + options.synthetic_problems > combos.size()) {
    throw ValidationError("toy corpus offers at most " + std::to_string(combos.size()) + " problems");
  }
  Rng rng(options.seed);
  rng.shuffle(std::span<Combo>(combos));

  std::vector<Problem> problems;
  std::vector<Solution> solutions;
  for (std::size_t i = 0; i < options.contest_problems + options.synthetic_problems; ++i) {
    const Combo& c = combos[i];
    const Family& fam = families()[c.family];
    const bool synthetic = i >= options.contest_problems;
    Problem p;
    p.id = std::string(synthetic ? "syn-" : "toy-") + fam.name + "-" + std::to_string(c.k) + "-" + std::to_string(c.m);
    p.statement = fill(fam.statement, c.k, c.m);
    p.source = synthetic ? ProblemSource::synthetic : ProblemSource::contest;
    if (!synthetic) {
      // One small, one medium and one larger input.
      for (auto [lo, hi] : {std::pair{3, 9}, std::pair{10, 20}, std::pair{21, 40}}) {
        const long long n = lo + static_cast<long long>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
        p.tests.push_back({std::to_string(n), std::to_string(fam.value(n, c.k, c.m))});
      }
      for (const Variant& v : fam.variants) {
        solutions.push_back({p.id, p.id + "/" + v.tag, fill(v.code, c.k, c.m), SolutionLabel::unverified, {},
                             PairRole::none});
      }
    } else {
      solutions.push_back({p.id, p.id + "/fast", fill(fam.variants[0].code, c.k, c.m), SolutionLabel::unverified, {},
                           PairRole::fast});
      solutions.push_back({p.id, p.id + "/slow", fill(fam.variants[4].code, c.k, c.m), SolutionLabel::unverified, {},
                           PairRole::slow});
    }
    problems.push_back(std::move(p));
  }
  return Corpus(std::move(problems), std::move(solutions));
}

}  // namespace perfalign
