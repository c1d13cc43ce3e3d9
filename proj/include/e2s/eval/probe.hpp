#pragma once

// Channel-region ablation and the binarised word-spotting probe on EEG
// embeddings.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "e2s/config.hpp"
#include "e2s/data/synthetic.hpp"
#include "e2s/matrix.hpp"
#include "e2s/types.hpp"

namespace e2s::eval {

// Keeps channels whose label belongs to one of the regions, in input order.
// "all" returns x unchanged. Label matching ignores case. Throws
// InvalidSelection for an unknown region or an empty result.
EegRecording channel_subset(const EegRecording& x, const std::vector<std::string>& regions,
                            const RegionMap& map);

// Lower-cased word tokens; punctuation and digits split words.
std::vector<std::string> tokenize(const std::string& text);

// The k most frequent lexicon nouns across transcripts, ties broken
// alphabetically.
std::vector<std::string> top_nouns(const std::vector<std::string>& transcripts,
                                   const data::Lexicon& lexicon, std::size_t k = 30);

bool contains_keyword(const std::string& transcript, const std::set<std::string>& keywords);

struct F1Scores {
  double positive = 0.0;  // F1 of the positive class
  double macro = 0.0;     // unweighted mean over both classes
};

// Class F1 is 0 when the class is neither present nor predicted correctly.
F1Scores f1_scores(const std::vector<int>& truth, const std::vector<int>& pred);

// Mean-pooled features into a logistic-regression head, fitted by full-batch
// gradient descent on standardised inputs.
class LinearProbe {
 public:
  struct Options {
    int iterations = 2000;
    double learning_rate = 0.5;
    double l2 = 1e-4;
  };

  LinearProbe() = default;
  explicit LinearProbe(Options o) : opt_(o) {}

  // rows are feature vectors. Throws InvalidInput for an empty or ragged set.
  void fit(const std::vector<std::vector<double>>& x, const std::vector<int>& y);
  double probability(const std::vector<double>& x) const;
  int predict(const std::vector<double>& x) const { return probability(x) >= 0.5 ? 1 : 0; }

 private:
  Options opt_;
  std::vector<double> mean_, scale_, w_;
  double b_ = 0.0;
};

std::vector<double> mean_pool(const Matrix& embedding);  // [D x T] -> D

struct ProbeExample {
  std::string id;
  std::string split;  // "train" or a test split name
  Matrix embedding;   // [D x frames]
  std::string transcript;
};

struct SplitF1 {
  std::string split;
  std::size_t n = 0;
  std::size_t n_positive = 0;
  std::optional<F1Scores> f1;  // empty when the split holds a single class
};

struct WordspotReport {
  std::vector<std::string> keywords;
  std::vector<SplitF1> splits;

  nlohmann::json to_json() const;
};

WordspotReport wordspot_probe(const std::vector<ProbeExample>& examples,
                              const std::vector<std::string>& keywords,
                              LinearProbe::Options options = {});

}  // namespace e2s::eval
