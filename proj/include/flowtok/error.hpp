// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace flowtok {

// Bad input from the caller: malformed files, invalid flags, incompatible
// checkpoints. The CLI maps this to exit code 1.
class UserError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite values, failed decompositions and other numerical breakdowns.
// The CLI maps this to exit code 2.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace flowtok
