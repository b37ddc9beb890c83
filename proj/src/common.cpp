// Copyright 2026 The AVSEMamba Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "avsm/common.hpp"

#include <sstream>

#include "avsm/tensor.hpp"

namespace avsm {

const char* error_kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::kConfig: return "ConfigError";
    case ErrorKind::kEmptyInput: return "EmptyInput";
    case ErrorKind::kShape: return "ShapeError";
    case ErrorKind::kDomain: return "DomainError";
    case ErrorKind::kLengthMismatch: return "LengthMismatch";
    case ErrorKind::kContract: return "ContractError";
    case ErrorKind::kFile: return "FileError";
    case ErrorKind::kResampleRequired: return "ResampleRequired";
    case ErrorKind::kValidation: return "ValidationError";
    case ErrorKind::kVersionMismatch: return "VersionMismatch";
    case ErrorKind::kCorruptFile: return "CorruptFile";
    case ErrorKind::kZeroPowerSource: return "ZeroPowerSource";
    case ErrorKind::kZeroReference: return "ZeroReference";
    case ErrorKind::kTooShort: return "TooShort";
  }
  return "Error";
}

}  // namespace avsm

namespace avsm::ad {

std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << "]";
  return os.str();
}

}  // namespace avsm::ad
