from ufdanet.cli import main

main()
