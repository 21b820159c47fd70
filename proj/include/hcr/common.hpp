#pragma once

#include <stdexcept>
#include <string>

namespace hcr {

enum class Mode { kTrain, kEval };

/// Base class for all errors thrown by this library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Tensor dimensions do not satisfy an operation's contract. The message
/// names the offending axis.
struct ShapeError : Error {
    using Error::Error;
};

/// Invalid configuration value (bad hyperparameter, malformed run config,
/// inconsistent ensemble spec).
struct ConfigError : Error {
    using Error::Error;
};

/// Malformed byte stream. Carries the byte offset where decoding failed.
struct ParseError : Error {
    ParseError(const std::string& msg, std::size_t offset)
        : Error(msg + " (at byte offset " + std::to_string(offset) + ")"),
          byte_offset(offset) {}
    std::size_t byte_offset;
};

/// Checkpoint or other artifact failed to load (bad magic, version,
/// or mismatched model description).
struct LoadError : Error {
    using Error::Error;
};

/// Training diverged or otherwise failed mid-run.
struct TrainingError : Error {
    TrainingError(const std::string& msg, int epoch_, int batch_)
        : Error(msg + " (epoch " + std::to_string(epoch_) + ", batch " +
                std::to_string(batch_) + ")"),
          epoch(epoch_),
          batch(batch_) {}
    int epoch;
    int batch;
};

}  // namespace hcr
