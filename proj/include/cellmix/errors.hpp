/*
   Copyright 2026 The cellmix authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#pragma once

#include <stdexcept>
#include <string>

namespace cellmix {

/// Base of every error raised by the library. Runtime failures map to exit
/// code 2, validation errors to exit code 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual int exit_code() const { return 2; }
    virtual const char* kind() const { return "Error"; }
};

class ValidationError : public Error {
public:
    using Error::Error;
    int exit_code() const override { return 1; }
    const char* kind() const override { return "ValidationError"; }
};

#define CELLMIX_DEFINE_ERROR(Name, Base)                                  \
    class Name : public Base {                                            \
    public:                                                               \
        using Base::Base;                                                 \
        const char* kind() const override { return #Name; }               \
    };

CELLMIX_DEFINE_ERROR(CapExceeded, Error)
CELLMIX_DEFINE_ERROR(StepTooLarge, Error)
CELLMIX_DEFINE_ERROR(DegeneratePair, Error)
CELLMIX_DEFINE_ERROR(DesyncDetected, Error)
CELLMIX_DEFINE_ERROR(ResolutionGuard, Error)
CELLMIX_DEFINE_ERROR(CFLViolation, Error)
CELLMIX_DEFINE_ERROR(SolverDiverged, Error)
CELLMIX_DEFINE_ERROR(OutOfTheory, ValidationError)
CELLMIX_DEFINE_ERROR(TooFewPoints, ValidationError)

#undef CELLMIX_DEFINE_ERROR

} // namespace cellmix
