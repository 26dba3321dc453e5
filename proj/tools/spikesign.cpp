#include "spikesign/cli.hpp"

int main(int argc, char** argv) { return spikesign::dispatch(argc, argv); }
