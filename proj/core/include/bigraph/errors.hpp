#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace bigraph {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape or extent disagreement between operands.
struct DimensionError : Error {
  using Error::Error;
};

// Invalid or inconsistent configuration values.
struct ConfigError : Error {
  using Error::Error;
};

// Violated operation contract (preconditions on values).
struct ContractError : Error {
  using Error::Error;
};

// Metric has no defined value for the given inputs.
struct UndefinedMetricError : Error {
  using Error::Error;
};

// Training must stop; the last good checkpoint is kept on disk.
struct TrainAbortError : Error {
  using Error::Error;
};

#define BG_THROW(ExcType, msg)        \
  do {                                \
    std::ostringstream bg_oss_;       \
    bg_oss_ << msg;                   \
    throw ExcType(bg_oss_.str());     \
  } while (0)

#define BG_CHECK_DIM(cond, msg) \
  do {                          \
    if (!(cond)) BG_THROW(::bigraph::DimensionError, msg); \
  } while (0)

#define BG_CHECK_CFG(cond, msg) \
  do {                          \
    if (!(cond)) BG_THROW(::bigraph::ConfigError, msg); \
  } while (0)

#define BG_CHECK(cond, msg) \
  do {                      \
    if (!(cond)) BG_THROW(::bigraph::ContractError, msg); \
  } while (0)

}  // namespace bigraph
