#pragma once

#include "spindyn/common.hpp"

#include <map>
#include <string>
#include <vector>

namespace spindyn {

// Contrast (or intensity) versus frequency, with free-form metadata.
struct SpectrumResult {
  std::vector<double> frequencies;
  std::vector<double> contrast;
  std::map<std::string, std::string> metadata;

  void validate() const {
    if (frequencies.size() != contrast.size()) {
      throw Error(ErrorKind::kNumericalContract, "spectrum", "spectrum arrays differ in length");
    }
    for (std::size_t k = 1; k < frequencies.size(); ++k)
      if (!(frequencies[k] > frequencies[k - 1])) {
        throw Error(ErrorKind::kNumericalContract, "spectrum", "spectrum frequencies are not increasing");
      }
  }
};

}  // namespace spindyn
