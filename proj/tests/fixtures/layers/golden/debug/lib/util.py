# utilitaires élémentaires → doubler
def double(x):
    print("double", x)
    return x * 2
