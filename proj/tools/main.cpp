#include "commands.hpp"

int main(int argc, char** argv) { return afsd::cli::run(argc, argv); }
