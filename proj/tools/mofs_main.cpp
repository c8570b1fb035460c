// Placeholder entry point; subcommands are wired up in later commits.
int main() { return 0; }
