import importlib

def check_requirements(filename:str='requirements.txt') -> int:
    try:
        with open(filename, 'r') as f:
            for line in f:
                line = line.split('#')[0].strip()
                if not line:
                    continue
                for sep in ('==', '>=', '<=', '~=', '<', '>'):
                    line = line.split(sep)[0]
                importlib.import_module(line.strip())
    except ImportError as e:
        print(f"[ERROR] Missing package: {e.name}")
        return 1
    except Exception as e:
        print(f"[ERROR] An error occurred: {e}")
        return 2
    print('[OK] all requirements importable')
    return 0

if __name__ == "__main__":
    exit_code = check_requirements()
    exit(exit_code)
