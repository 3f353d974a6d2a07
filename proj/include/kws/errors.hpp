#pragma once

#include <stdexcept>
#include <string>

namespace kws {

// Error hierarchy shared by the library and the CLI exit-code map:
//   io_error -> 2, format_error / shape_error -> 3, config_error -> 4.

struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Filesystem / stream failures (missing file, short read, ...).
struct io_error : error {
  using error::error;
};

/// Malformed or unsupported file contents.
struct format_error : error {
  using error::error;
};

/// Tensor/dimension mismatches, numeric-mode mismatches.
struct shape_error : error {
  using error::error;
};

/// Inconsistent options or arguments.
struct config_error : error {
  using error::error;
};

/// WAV ingestion failures, with a machine-checkable reason.
struct wav_error : format_error {
  enum class reason {
    malformed,
    unsupported_format,
    unsupported_rate,
    unsupported_depth,
    unsupported_channels,
  };

  wav_error(reason r, const std::string& msg) : format_error(msg), why(r) {}

  reason why;
};

}  // namespace kws
