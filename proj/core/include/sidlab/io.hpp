#pragma once

#include <string>
#include <variant>
#include <vector>

#include "sidlab/classifiers.hpp"
#include "sidlab/detector.hpp"

namespace sidlab {

// Round-trip-exact decimal formatting used by all result files.
std::string fmt_double(double v);

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

// A checkpointable classifier of any flavor.
struct AnyClassifier {
  std::variant<AffineClassifier, QuadraticClassifier, MlpClassifier,
               DualClassifier>
      model;
  const IClassifier& ref() const;
  std::string kind() const;
};

// Self-describing JSON documents with named flat parameter arrays.
void save_checkpoint(const std::string& path, const AnyClassifier& c);
AnyClassifier load_checkpoint(const std::string& path);

void save_sid(const std::string& path, const SidNet& net);
SidNet load_sid(const std::string& path);

}  // namespace sidlab
