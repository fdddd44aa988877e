#include "drivesql/cli.hpp"

int main(int argc, char** argv) { return drivesql::cli::run(argc, argv); }
