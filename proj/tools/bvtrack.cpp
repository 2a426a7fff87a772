#include "bvtrack/cli.hpp"

int main(int argc, char** argv)
{
    return bvtrack::cli::main(argc, argv);
}
