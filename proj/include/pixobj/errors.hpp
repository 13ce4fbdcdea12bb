#pragma once

#include <stdexcept>
#include <string>

namespace pixobj {

// A caller broke a documented precondition (bad shape, label outside the
// alphabet, invalid target size, ...). Maps to CLI exit code 1.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// File-system or codec failure. Maps to CLI exit code 2.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Weight/index archive problems. Each failure mode has its own type so callers
// (and tests) can tell them apart.
class ArchiveError : public IoError {
 public:
  using IoError::IoError;
};

class CorruptManifestError : public ArchiveError {
 public:
  using ArchiveError::ArchiveError;
};

class ShapeMismatchError : public ArchiveError {
 public:
  using ArchiveError::ArchiveError;
};

class TruncatedBlobError : public ArchiveError {
 public:
  using ArchiveError::ArchiveError;
};

class ChecksumError : public ArchiveError {
 public:
  using ArchiveError::ArchiveError;
};

// Training diverged.
class NonFiniteLossError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pixobj
