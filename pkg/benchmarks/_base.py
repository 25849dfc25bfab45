class Bench:
    """asv settings shared by the oodbench suites.

    Training a classifier or a 100-tree forest takes up to a second, so fewer
    repeats are run than asv defaults to, with a longer time cap.
    """

    # 5-20 repeats, stop after 10s
    repeat = (5, 20, 10.0)
    rounds = 2
    timeout = 120.0
