// Copyright (C) 2026 The CBR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace cbr {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define CBR_DEFINE_ERROR(Name)          \
  class Name : public Error {           \
   public:                              \
    using Error::Error;                 \
  };

CBR_DEFINE_ERROR(CoordinateSystemError)
CBR_DEFINE_ERROR(DomainError)
CBR_DEFINE_ERROR(FormatError)
CBR_DEFINE_ERROR(DataError)
CBR_DEFINE_ERROR(BoundsError)
CBR_DEFINE_ERROR(DegenerateClipError)
CBR_DEFINE_ERROR(ShapeError)
CBR_DEFINE_ERROR(ContractError)
CBR_DEFINE_ERROR(DivergenceError)
CBR_DEFINE_ERROR(SamplingError)
CBR_DEFINE_ERROR(GenerationError)
CBR_DEFINE_ERROR(ValidationError)
CBR_DEFINE_ERROR(UndefinedMetricError)

#undef CBR_DEFINE_ERROR

}  // namespace cbr
