class ImportOodbenchBench:
    repeat = 10

    def timeraw_import_oodbench(self) -> str:
        return """
        import oodbench
        """
