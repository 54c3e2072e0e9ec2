#include "factorlasso/report.hpp"

int main(int argc, char** argv) { return factorlasso::run_cli(argc, argv); }
