// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "flowtok/cli/app.hpp"

int main(int argc, char** argv) { return flowtok::cli::run(argc, argv, std::cout, std::cerr); }
