// Copyright 2026 The DEFT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace deft {

// Root of every error the library throws. Subclasses name the failure class
// used throughout the module contracts.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define DEFT_DEFINE_ERROR(Name)            \
  class Name : public Error {              \
   public:                                 \
    using Error::Error;                    \
  }

DEFT_DEFINE_ERROR(InputError);        // malformed or out-of-range input values
DEFT_DEFINE_ERROR(CapacityError);     // sequence or prompt exceeds model capacity
DEFT_DEFINE_ERROR(ShapeError);        // tensor shape mismatch
DEFT_DEFINE_ERROR(UsageError);        // API misuse (wrong call order, bad keys)
DEFT_DEFINE_ERROR(ConflictError);     // overlapping PEFT attachment sites
DEFT_DEFINE_ERROR(InfeasibleError);   // budget cannot be met
DEFT_DEFINE_ERROR(ChannelError);      // rank-deficient channel
DEFT_DEFINE_ERROR(DimensionError);    // target matrix does not fit the antennas
DEFT_DEFINE_ERROR(ConfigError);       // invalid protocol / run configuration
DEFT_DEFINE_ERROR(GenerationError);   // synthetic data cannot be generated
DEFT_DEFINE_ERROR(ConsistencyError);  // internal invariant violated at runtime

#undef DEFT_DEFINE_ERROR

}  // namespace deft
