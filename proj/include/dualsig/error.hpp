// Copyright 2026 The dualsig Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace dualsig {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define DUALSIG_DEFINE_ERROR(Name)          \
  class Name : public Error {               \
   public:                                  \
    using Error::Error;                     \
  }

DUALSIG_DEFINE_ERROR(ShapeError);
DUALSIG_DEFINE_ERROR(IndexError);
DUALSIG_DEFINE_ERROR(ContractError);
DUALSIG_DEFINE_ERROR(NumericError);
DUALSIG_DEFINE_ERROR(ConfigError);
DUALSIG_DEFINE_ERROR(LengthError);
DUALSIG_DEFINE_ERROR(FormatError);
DUALSIG_DEFINE_ERROR(LabelError);
DUALSIG_DEFINE_ERROR(FieldError);
DUALSIG_DEFINE_ERROR(IoError);
DUALSIG_DEFINE_ERROR(VersionError);

#undef DUALSIG_DEFINE_ERROR

// Grammar violation in a unified proposition string; `position` is a byte offset.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : Error(what + " at byte " + std::to_string(position)), position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

}  // namespace dualsig
