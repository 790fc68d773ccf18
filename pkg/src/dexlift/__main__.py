from dexlift.cli import main

main()
