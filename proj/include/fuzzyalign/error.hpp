// Copyright 2026 the fuzzyalign authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace fuzzyalign {

/// Base class for every error raised by this library.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// A vector with (near-)zero L2 norm reached a cosine computation.
struct ZeroNormError : Error {
  using Error::Error;
};

/// Operands have incompatible dimensions.
struct ShapeError : Error {
  using Error::Error;
};

/// A value that must stay finite became NaN or infinite.
struct NonFiniteError : Error {
  using Error::Error;
};

/// Two forward evaluations of the same function disagreed.
struct NonDeterministicError : Error {
  using Error::Error;
};

/// Gated alignment was requested but the batch carries no bridge modality.
struct MissingGroundError : Error {
  using Error::Error;
};

/// A similarity-distribution row has no positive label.
struct NoPositiveError : Error {
  using Error::Error;
};

/// A query identity does not occur in the gallery.
struct OrphanQueryError : Error {
  using Error::Error;
};

/// A file failed structural validation (magic, version, payload size).
struct CorruptFileError : Error {
  using Error::Error;
};

/// A configuration document failed validation; message names the field.
struct ConfigInvalidError : Error {
  using Error::Error;
};

/// Training produced a non-finite loss.
struct DivergedError : Error {
  explicit DivergedError(const std::string& what, long last_finite_step_in)
      : Error(what), last_finite_step(last_finite_step_in) {}
  long last_finite_step = -1;
};

}  // namespace fuzzyalign
